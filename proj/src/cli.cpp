#include "favs/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "favs/fixtures.hpp"
#include "favs/parallel.hpp"
#include "favs/pipeline.hpp"
#include "favs/spectral.hpp"

namespace fs = std::filesystem;

namespace favs::cli {

namespace {

using fixtures::FtenContainer;
using fixtures::IoError;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("short write to '" + path + "'");
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  if (!fs::is_directory(dir)) {
    throw IoError("'" + dir.string() + "' is not a directory");
  }
}

void ensure_parent(const fs::path& file) {
  const fs::path parent = file.parent_path();
  if (!parent.empty()) ensure_dir(parent);
}

spectral::ThresholdLadder parse_tau(const std::string& text) {
  spectral::ThresholdLadder ladder;
  std::string rest = text;
  for (int i = 0; i < 4; ++i) {
    const std::size_t comma = rest.find(',');
    const bool last = i == 3;
    if (last != (comma == std::string::npos)) {
      throw std::invalid_argument("tau: expected 4 comma-separated values, got '" + text + "'");
    }
    const std::string piece = last ? rest : rest.substr(0, comma);
    try {
      std::size_t used = 0;
      ladder.taus[static_cast<std::size_t>(i)] = std::stod(piece, &used);
      if (used != piece.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::invalid_argument("tau: bad number '" + piece + "'");
    }
    if (!last) rest = rest.substr(comma + 1);
  }
  ladder.validate();
  return ladder;
}

/// P2 grayscale. `log_scale` compresses magnitudes; `center` rotates the
/// origin bin into the middle of the image.
void write_pgm(const std::string& path, const RealTensor& img, bool log_scale, bool center) {
  if (img.shape.size() != 2) {
    throw std::invalid_argument("pgm: expected a rank-2 image, got " + shape_str(img.shape));
  }
  const std::size_t h = img.shape[0], w = img.shape[1];
  std::vector<double> vals(h * w);
  double peak = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sy = center ? (y + h / 2) % h : y;
      const std::size_t sx = center ? (x + w / 2) % w : x;
      double v = std::abs(img(sy, sx));
      if (log_scale) v = std::log1p(v);
      vals[y * w + x] = v;
      peak = std::max(peak, v);
    }
  }
  std::ostringstream out;
  out << "P2\n" << w << " " << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = peak > 0.0 ? vals[y * w + x] / peak : 0.0;
      const int level = static_cast<int>(v * 255.0 + 0.5);
      out << std::clamp(level, 0, 255);
      out << (x + 1 == w ? '\n' : ' ');
    }
  }
  write_text_file(path, out.str());
}

RealTensor magnitude_image(const ComplexTensor& spectrum) {
  RealTensor img(spectrum.shape);
  for (std::size_t i = 0; i < spectrum.size(); ++i) img.data[i] = std::abs(spectrum.data[i]);
  return img;
}

int map_exception(const char* cmd) {
  try {
    throw;
  } catch (const IoError& e) {
    std::cerr << cmd << ": " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << cmd << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << cmd << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

void apply_thread_env() {
  const char* raw = std::getenv("FAVS_THREADS");
  if (raw == nullptr || *raw == '\0') {
    set_thread_cap(1);
    return;
  }
  int n = 0;
  const char* last = raw + std::string_view(raw).size();
  auto [ptr, ec] = std::from_chars(raw, last, n);
  if (ec != std::errc() || ptr != last || n < 1) {
    throw std::invalid_argument("FAVS_THREADS must be a positive integer, got '" +
                                std::string(raw) + "'");
  }
  set_thread_cap(n);
}

CommandResult cmd_gen_fixture(const GenFixtureOpts& opts) {
  try {
    apply_thread_env();
    fixtures::SceneFixture fx =
        fixtures::gen_scene(opts.seed, opts.frames, opts.size, opts.channels,
                            fixtures::parse_texture(opts.texture),
                            fixtures::parse_motion(opts.motion));
    ensure_parent(fs::path(opts.out));
    fixtures::write_ften(opts.out, fx.to_container());
    const std::string manifest_path = opts.out + ".manifest.txt";
    write_text_file(manifest_path, fx.manifest.to_text());
    std::cout << "wrote " << opts.out << " (" << opts.frames << " frames, " << opts.size << "x"
              << opts.size << ", " << opts.channels << " channels, "
              << fixtures::texture_name(fx.manifest.texture) << ", "
              << fixtures::motion_name(fx.manifest.motion) << ")\n";
    return {0, {opts.out, manifest_path}};
  } catch (...) {
    return {map_exception("gen-fixture"), {}};
  }
}

CommandResult cmd_decompose(const DecomposeOpts& opts) {
  try {
    apply_thread_env();
    const spectral::ThresholdLadder ladder = parse_tau(opts.tau);
    const FtenContainer container = fixtures::read_ften(opts.input);
    const RealTensor& source = fixtures::get_real(container, opts.tensor);

    RealTensor slice;
    if (source.rank() == 2) {
      slice = source;
    } else if (source.rank() == 3) {
      const std::size_t h = source.shape[1], w = source.shape[2];
      slice = RealTensor({h, w});
      std::copy_n(source.data.begin(), h * w, slice.data.begin());
    } else if (source.rank() == 4) {
      const std::size_t c = source.shape[1], h = source.shape[2], w = source.shape[3];
      slice = RealTensor({h, w});
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < h * w; ++p) slice.data[p] += source.data[ch * h * w + p];
      }
      for (std::size_t p = 0; p < h * w; ++p) slice.data[p] /= static_cast<double>(c);
    } else {
      throw std::invalid_argument("tensor '" + opts.tensor + "' has rank " +
                                  std::to_string(source.rank()) + ", expected 2, 3 or 4");
    }

    ensure_dir(fs::path(opts.out_dir));
    const ComplexTensor spectrum = spectral::fft2(slice);
    const spectral::BandSet bands = spectral::residual_decompose(spectrum, ladder);

    CommandResult result;
    result.exit_code = 0;
    const struct {
      const char* name;
      const ComplexTensor* band;
    } rows[4] = {{"high", &bands.high},
                 {"mid", &bands.mid},
                 {"low", &bands.low},
                 {"residual", &bands.residual}};

    for (const auto& row : rows) {
      const std::string path = (fs::path(opts.out_dir) / ("band_" + std::string(row.name) + ".pgm")).string();
      write_pgm(path, magnitude_image(*row.band), true, true);
      result.artifacts.push_back(path);
    }

    const double total = spectral::band_energy(spectrum);
    std::ostringstream csv;
    csv << "band,energy,share\n";
    for (const auto& row : rows) {
      const double e = spectral::band_energy(*row.band);
      csv << row.name << "," << fmt_double(e) << ","
          << fmt_double(total > 0.0 ? e / total : 0.0) << "\n";
    }
    const std::string energies_path = (fs::path(opts.out_dir) / "energies.csv").string();
    write_text_file(energies_path, csv.str());
    result.artifacts.push_back(energies_path);

    std::size_t mismatched = 0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
      const std::complex<double> sum =
          bands.high.data[i] + bands.mid.data[i] + bands.low.data[i] + bands.residual.data[i];
      if (sum != spectrum.data[i]) ++mismatched;
    }
    std::cout << "band partition: "
              << (mismatched == 0 ? "exact"
                                  : "MISMATCH in " + std::to_string(mismatched) + " bins")
              << "\n";
    std::cout << "total energy: " << fmt_double(total) << "\n";

    if (fixtures::has_entry(container, "gt_masks")) {
      const RealTensor& gt = fixtures::get_real(container, "gt_masks");
      if (gt.rank() == 3 && gt.shape[1] == slice.shape[0] && gt.shape[2] == slice.shape[1]) {
        const std::size_t hw = slice.size();
        std::ostringstream stats;
        stats << "band,object_density,background_density,ratio\n";
        for (const auto& row : rows) {
          const RealTensor spatial = real_part(spectral::ifft2(*row.band));
          double obj = 0.0, bg = 0.0;
          std::size_t n_obj = 0, n_bg = 0;
          for (std::size_t p = 0; p < hw; ++p) {
            const double v = spatial.data[p] * spatial.data[p];
            if (gt.data[p] != 0.0) {
              obj += v;
              ++n_obj;
            } else {
              bg += v;
              ++n_bg;
            }
          }
          const double od = n_obj > 0 ? obj / static_cast<double>(n_obj) : 0.0;
          const double bd = n_bg > 0 ? bg / static_cast<double>(n_bg) : 0.0;
          stats << row.name << "," << fmt_double(od) << "," << fmt_double(bd) << ","
                << fmt_double(bd > 0.0 ? od / bd : std::numeric_limits<double>::infinity())
                << "\n";
        }
        const std::string stats_path = (fs::path(opts.out_dir) / "region_stats.csv").string();
        write_text_file(stats_path, stats.str());
        result.artifacts.push_back(stats_path);
      }
    }
    return result;
  } catch (...) {
    return {map_exception("decompose"), {}};
  }
}

CommandResult cmd_gen_params(const GenParamsOpts& opts) {
  try {
    apply_thread_env();
    const pipeline::ModelConfig cfg = pipeline::parse_config(read_text_file(opts.config));
    const pipeline::ModelParams params = pipeline::init_params(cfg);
    ensure_parent(fs::path(opts.out));
    fixtures::write_ften(opts.out, pipeline::params_to_container(params));
    std::cout << "wrote " << opts.out << " (" << cfg.stages << " stages, " << cfg.experts
              << " experts, " << cfg.channels << " channels)\n";
    return {0, {opts.out}};
  } catch (...) {
    return {map_exception("gen-params"), {}};
  }
}

namespace {

struct LoadedRun {
  pipeline::ModelConfig cfg;
  pipeline::ModelParams params;
  fixtures::SceneFixture fixture;
  pipeline::StageOutput stages;
};

LoadedRun load_and_run(const std::string& config_path, const std::string& params_path,
                       const std::string& fixture_path) {
  LoadedRun r;
  r.cfg = pipeline::parse_config(read_text_file(config_path));
  r.params = pipeline::params_from_container(fixtures::read_ften(params_path), r.cfg);
  r.fixture = fixtures::SceneFixture::from_container(fixtures::read_ften(fixture_path));
  if (r.fixture.frames.rank() != 4 || r.fixture.frames.shape[1] != 3 ||
      r.fixture.frames.shape[2] != r.cfg.size || r.fixture.frames.shape[3] != r.cfg.size) {
    throw std::invalid_argument("fixture frames have shape " +
                                shape_str(r.fixture.frames.shape) + ", config size is " +
                                std::to_string(r.cfg.size));
  }
  r.stages = pipeline::run_stages(r.fixture.stage_features, r.fixture.audio_features, r.cfg,
                                  r.params);
  return r;
}

std::string routing_csv(const pipeline::StageRouting& routing, std::size_t ne) {
  std::ostringstream csv;
  csv << "frame,side,entropy,k_eff";
  for (std::size_t e = 0; e < ne; ++e) csv << ",w" << e;
  for (std::size_t e = 0; e < ne; ++e) csv << ",sw" << e;
  csv << "\n";
  const std::size_t T = routing.visual.entropy.size();
  for (std::size_t t = 0; t < T; ++t) {
    const struct {
      const char* side;
      const scmc::RoutingDecision* d;
    } sides[2] = {{"visual", &routing.visual}, {"audio", &routing.audio}};
    for (const auto& s : sides) {
      csv << t << "," << s.side << "," << fmt_double(s.d->entropy(t)) << "," << s.d->k_eff[t];
      for (std::size_t e = 0; e < ne; ++e) csv << "," << fmt_double(s.d->weights(t, e));
      for (std::size_t e = 0; e < ne; ++e) csv << "," << fmt_double(s.d->sparse_weights(t, e));
      csv << "\n";
    }
  }
  return csv.str();
}

}  // namespace

CommandResult cmd_run(const RunOpts& opts) {
  try {
    apply_thread_env();
    LoadedRun r = load_and_run(opts.config, opts.params, opts.fixture);
    const std::size_t T = r.fixture.frames.shape[0];
    const std::size_t base = r.cfg.size;

    RealTensor queries = pipeline::derive_queries(r.stages.audio, r.params.queries);
    pipeline::Prediction pred =
        pipeline::decode_masks(queries, r.stages.visual, r.params.decoder, base, base);
    if (opts.oracle_mask) pred.binary_mask = r.fixture.gt_masks;

    ensure_dir(fs::path(opts.out));
    CommandResult result;

    FtenContainer out_container;
    out_container.push_back({"mask_logits", pred.mask_logits});
    out_container.push_back({"class_logits", pred.class_logits});
    out_container.push_back({"binary_mask", pred.binary_mask});
    const std::string pred_path = (fs::path(opts.out) / "prediction.ften").string();
    fixtures::write_ften(pred_path, out_container);
    result.artifacts.push_back(pred_path);

    for (std::size_t t = 0; t < T; ++t) {
      RealTensor frame({base, base});
      std::copy_n(pred.binary_mask.data.begin() + static_cast<std::ptrdiff_t>(t * base * base),
                  base * base, frame.data.begin());
      const std::string path =
          (fs::path(opts.out) / ("mask_t" + std::to_string(t) + ".pgm")).string();
      write_pgm(path, frame, false, false);
      result.artifacts.push_back(path);
    }

    const std::vector<double> jac = pipeline::jaccard_per_frame(pred.binary_mask, r.fixture.gt_masks);
    const std::vector<double> fsc = pipeline::fscore_per_frame(pred.binary_mask, r.fixture.gt_masks);
    std::ostringstream metrics;
    metrics << "frame,jaccard,fscore\n";
    double jm = 0.0, fm = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      metrics << t << "," << fmt_double(jac[t]) << "," << fmt_double(fsc[t]) << "\n";
      jm += jac[t];
      fm += fsc[t];
    }
    jm /= static_cast<double>(T);
    fm /= static_cast<double>(T);
    metrics << "mean," << fmt_double(jm) << "," << fmt_double(fm) << "\n";
    const std::string metrics_path = (fs::path(opts.out) / "metrics.csv").string();
    write_text_file(metrics_path, metrics.str());
    result.artifacts.push_back(metrics_path);

    for (std::size_t i = 0; i < r.stages.routing.size(); ++i) {
      const std::string path =
          (fs::path(opts.out) / ("routing_stage" + std::to_string(i + 1) + ".csv")).string();
      write_text_file(path, routing_csv(r.stages.routing[i], r.cfg.experts));
      result.artifacts.push_back(path);
    }

    std::cout << "jaccard=" << fmt_double(jm) << " fscore=" << fmt_double(fm) << "\n";
    for (std::size_t i = 0; i < r.stages.routing.size(); ++i) {
      const auto& routing = r.stages.routing[i];
      std::cout << "stage " << (i + 1) << " k_eff:";
      for (std::size_t t = 0; t < T; ++t) {
        std::cout << " v" << t << "=" << routing.visual.k_eff[t] << " a" << t << "="
                  << routing.audio.k_eff[t];
      }
      std::cout << "\n";
    }
    result.exit_code = 0;
    return result;
  } catch (...) {
    return {map_exception("run"), {}};
  }
}

CommandResult cmd_route_stats(const RouteStatsOpts& opts) {
  try {
    apply_thread_env();
    LoadedRun r = load_and_run(opts.config, opts.params, opts.fixture);
    const std::size_t T = r.fixture.frames.shape[0];
    const std::size_t ne = r.cfg.experts;

    std::ostringstream csv;
    csv << "stage,frame,visual_entropy,visual_k,audio_entropy,audio_k";
    for (std::size_t e = 0; e < ne; ++e) csv << ",visual_w" << e;
    for (std::size_t e = 0; e < ne; ++e) csv << ",audio_w" << e;
    csv << "\n";
    for (std::size_t i = 0; i < r.stages.routing.size(); ++i) {
      const auto& routing = r.stages.routing[i];
      for (std::size_t t = 0; t < T; ++t) {
        csv << (i + 1) << "," << t << "," << fmt_double(routing.visual.entropy(t)) << ","
            << routing.visual.k_eff[t] << "," << fmt_double(routing.audio.entropy(t)) << ","
            << routing.audio.k_eff[t];
        for (std::size_t e = 0; e < ne; ++e) {
          csv << "," << fmt_double(routing.visual.sparse_weights(t, e));
        }
        for (std::size_t e = 0; e < ne; ++e) {
          csv << "," << fmt_double(routing.audio.sparse_weights(t, e));
        }
        csv << "\n";
      }
    }
    ensure_parent(fs::path(opts.out));
    write_text_file(opts.out, csv.str());

    for (std::size_t i = 0; i < r.stages.routing.size(); ++i) {
      const auto& routing = r.stages.routing[i];
      const struct {
        const char* side;
        const scmc::RoutingDecision* d;
      } sides[2] = {{"visual", &routing.visual}, {"audio", &routing.audio}};
      for (const auto& s : sides) {
        std::cout << "stage " << (i + 1) << " " << s.side << " utilization:";
        for (std::size_t e = 0; e < ne; ++e) {
          double mean = 0.0;
          for (std::size_t t = 0; t < T; ++t) mean += s.d->sparse_weights(t, e);
          mean /= static_cast<double>(T);
          std::cout << " e" << e << "=" << fmt_double(mean);
        }
        std::cout << "\n";
        std::cout << "stage " << (i + 1) << " " << s.side << " histogram:";
        for (std::size_t e = 0; e < ne; ++e) {
          double mean = 0.0;
          for (std::size_t t = 0; t < T; ++t) mean += s.d->sparse_weights(t, e);
          mean /= static_cast<double>(T);
          const int bar = static_cast<int>(std::lround(mean * 32.0));
          std::cout << " [" << std::string(static_cast<std::size_t>(std::clamp(bar, 0, 32)), '#')
                    << "]";
        }
        std::cout << "\n";
      }
    }
    return {0, {opts.out}};
  } catch (...) {
    return {map_exception("route-stats"), {}};
  }
}

}  // namespace favs::cli
