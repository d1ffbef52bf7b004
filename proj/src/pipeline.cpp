#include "favs/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "favs/ops.hpp"

namespace favs::pipeline {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw std::invalid_argument("config key '" + key + "': bad integer '" + value + "'");
  }
  return out;
}

double parse_f64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': bad number '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config key '" + key + "': bad flag '" + value + "'");
}

}  // namespace

void ModelConfig::validate() const {
  if (stages < 1) throw std::invalid_argument("config: stages must be >= 1");
  if (channels < 2 || channels % 2 != 0) {
    throw std::invalid_argument("config: channels must be even and >= 2");
  }
  if (experts < 1) throw std::invalid_argument("config: experts must be >= 1");
  if (queries < 1) throw std::invalid_argument("config: queries must be >= 1");
  if (classes < 1) throw std::invalid_argument("config: classes must be >= 1");
  if (groups < 1 || channels % groups != 0) {
    throw std::invalid_argument("config: groups must divide channels");
  }
  if (reduction < 1 || channels % reduction != 0) {
    throw std::invalid_argument("config: reduction must divide channels");
  }
  if (size < 4 || (size & (size - 1)) != 0) {
    throw std::invalid_argument("config: size must be a power of two >= 4");
  }
  if (size >> (stages + 1) < 1) {
    throw std::invalid_argument("config: size too small for " + std::to_string(stages) +
                                " stages");
  }
  ladder.validate();
}

ModelConfig parse_config(const std::string& text) {
  ModelConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config: empty key");
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config: repeated key '" + key + "'");
    }

    if (key == "stages") {
      cfg.stages = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "channels") {
      cfg.channels = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "experts") {
      cfg.experts = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "queries") {
      cfg.queries = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "classes") {
      cfg.classes = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "groups") {
      cfg.groups = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "reduction") {
      cfg.reduction = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "size") {
      cfg.size = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key == "seed") {
      cfg.seed = parse_u64(key, value);
    } else if (key == "force_dense") {
      cfg.force_dense = parse_bool(key, value);
    } else if (key == "tau") {
      std::array<double, 4> taus{};
      std::string rest = value;
      for (int i = 0; i < 4; ++i) {
        const std::size_t comma = rest.find(',');
        const bool last = i == 3;
        if (last != (comma == std::string::npos)) {
          throw std::invalid_argument("config key 'tau': expected 4 comma-separated values");
        }
        taus[static_cast<std::size_t>(i)] = parse_f64(key, trim(last ? rest : rest.substr(0, comma)));
        if (!last) rest = rest.substr(comma + 1);
      }
      cfg.ladder.taus = taus;
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

namespace {

struct ParamDrawer {
  SplitMix64 rng;

  RealTensor draw(Shape shape, double scale) {
    return InitSpec{rng.next_u64(), InitScheme::UniformScaled, scale}.make(std::move(shape));
  }

  scmc::StcParams draw_stc(std::size_t c, std::size_t r) {
    scmc::StcParams p;
    p.spatial_gate = draw({1, 3, 3}, 1.0 / 3.0);
    const double s_in = 1.0 / std::sqrt(static_cast<double>(c));
    const double s_hid = 1.0 / std::sqrt(static_cast<double>(c / r));
    p.temporal_w1 = draw({c, c / r}, s_in);
    p.temporal_w2 = draw({c / r, c}, s_hid);
    p.channel_w1 = draw({c, c / r}, s_in);
    p.channel_w2 = draw({c / r, c}, s_hid);
    return p;
  }

  scmc::AttentionProjection draw_proj(std::size_t c) {
    const double s = 1.0 / std::sqrt(static_cast<double>(c));
    return {draw({c, c}, s), draw({c, c}, s), draw({c, c}, s), draw({c, c}, s)};
  }
};

}  // namespace

ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels, g = cfg.groups, r = cfg.reduction;
  const std::size_t cg = c / g;
  const double s_c = 1.0 / std::sqrt(static_cast<double>(c));
  ParamDrawer d{SplitMix64(cfg.seed)};

  ModelParams params;
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    StageParams sp;

    sp.fded_visual.dwc_kernels = d.draw({c, 3, 3}, 1.0 / 3.0);
    sp.fded_visual.group_weights = d.draw({g, cg, cg}, 1.0 / std::sqrt(static_cast<double>(cg)));
    sp.fded_visual.conv3d_kernel = d.draw({c, 3, 3, 3}, 1.0 / std::sqrt(27.0));
    sp.fded_visual.ladder = cfg.ladder;

    sp.fded_audio.dwc_kernels = d.draw({c, 3, 3}, 1.0 / 3.0);
    sp.fded_audio.group_weights = d.draw({g, cg, cg}, 1.0 / std::sqrt(static_cast<double>(cg)));
    sp.fded_audio.ca_w1 = d.draw({c, c / r}, s_c);
    sp.fded_audio.ca_w2 = d.draw({c / r, c}, 1.0 / std::sqrt(static_cast<double>(c / r)));
    sp.fded_audio.ladder = cfg.ladder;

    for (std::size_t e = 0; e < cfg.experts; ++e) {
      scmc::ExpertParams ep;
      ep.stc_q = d.draw_stc(c, r);
      ep.stc_k = d.draw_stc(c, r);
      ep.stc_v = d.draw_stc(c, r);
      ep.audio_to_visual = d.draw_proj(c);
      ep.visual_to_audio = d.draw_proj(c);
      sp.cross.experts.push_back(std::move(ep));
    }
    sp.cross.router.stc_a = d.draw_stc(c, r);
    sp.cross.router.stc_v = d.draw_stc(c, r);
    sp.cross.router.mlp_a_w1 = d.draw({c, c / 2}, s_c);
    sp.cross.router.mlp_a_w2 = d.draw({c / 2, cfg.experts}, 1.0 / std::sqrt(static_cast<double>(c / 2)));
    sp.cross.router.mlp_v_w1 = d.draw({c, c / 2}, s_c);
    sp.cross.router.mlp_v_w2 = d.draw({c / 2, cfg.experts}, 1.0 / std::sqrt(static_cast<double>(c / 2)));

    if (i > 0) sp.fuse = d.draw({c, 2 * c}, 1.0 / std::sqrt(static_cast<double>(2 * c)));
    params.stages.push_back(std::move(sp));
  }

  params.queries.embed = d.draw({cfg.queries, c}, 1.0);
  params.queries.mlp_w1 = d.draw({c, c}, s_c);
  params.queries.mlp_w2 = d.draw({c, c}, s_c);

  params.decoder.attn = d.draw_proj(c);
  params.decoder.pix = d.draw({c, c}, s_c);
  params.decoder.cls = d.draw({c, cfg.classes}, s_c);
  return params;
}

namespace {

RealTensor band_weights_tensor(const std::array<double, 4>& w) {
  return RealTensor::from({4}, {w[0], w[1], w[2], w[3]});
}

void emit_stc(fixtures::FtenContainer& c, const std::string& prefix,
              const scmc::StcParams& p) {
  c.push_back({prefix + ".spatial", p.spatial_gate});
  c.push_back({prefix + ".temporal.w1", p.temporal_w1});
  c.push_back({prefix + ".temporal.w2", p.temporal_w2});
  c.push_back({prefix + ".channel.w1", p.channel_w1});
  c.push_back({prefix + ".channel.w2", p.channel_w2});
}

void emit_proj(fixtures::FtenContainer& c, const std::string& prefix,
               const scmc::AttentionProjection& p) {
  c.push_back({prefix + ".q", p.q});
  c.push_back({prefix + ".k", p.k});
  c.push_back({prefix + ".v", p.v});
  c.push_back({prefix + ".out", p.out});
}

}  // namespace

fixtures::FtenContainer params_to_container(const ModelParams& p) {
  fixtures::FtenContainer c;
  for (std::size_t i = 0; i < p.stages.size(); ++i) {
    const StageParams& sp = p.stages[i];
    const std::string s = "stage" + std::to_string(i + 1) + ".";
    c.push_back({s + "fded.v.dwc", sp.fded_visual.dwc_kernels});
    c.push_back({s + "fded.v.group", sp.fded_visual.group_weights});
    c.push_back({s + "fded.v.conv3d", sp.fded_visual.conv3d_kernel});
    c.push_back({s + "fded.v.band_weights", band_weights_tensor(sp.fded_visual.band_weights_v)});
    c.push_back({s + "fded.a.dwc", sp.fded_audio.dwc_kernels});
    c.push_back({s + "fded.a.group", sp.fded_audio.group_weights});
    c.push_back({s + "fded.a.ca.w1", sp.fded_audio.ca_w1});
    c.push_back({s + "fded.a.ca.w2", sp.fded_audio.ca_w2});
    c.push_back({s + "fded.a.band_weights", band_weights_tensor(sp.fded_audio.band_weights_a)});
    for (std::size_t e = 0; e < sp.cross.experts.size(); ++e) {
      const scmc::ExpertParams& ep = sp.cross.experts[e];
      const std::string x = s + "scmc.expert" + std::to_string(e) + ".";
      emit_stc(c, x + "stc_q", ep.stc_q);
      emit_stc(c, x + "stc_k", ep.stc_k);
      emit_stc(c, x + "stc_v", ep.stc_v);
      emit_proj(c, x + "a2v", ep.audio_to_visual);
      emit_proj(c, x + "v2a", ep.visual_to_audio);
    }
    emit_stc(c, s + "scmc.router.stc_a", sp.cross.router.stc_a);
    emit_stc(c, s + "scmc.router.stc_v", sp.cross.router.stc_v);
    c.push_back({s + "scmc.router.mlp_a.w1", sp.cross.router.mlp_a_w1});
    c.push_back({s + "scmc.router.mlp_a.w2", sp.cross.router.mlp_a_w2});
    c.push_back({s + "scmc.router.mlp_v.w1", sp.cross.router.mlp_v_w1});
    c.push_back({s + "scmc.router.mlp_v.w2", sp.cross.router.mlp_v_w2});
    if (i > 0) c.push_back({s + "fuse", sp.fuse});
  }
  c.push_back({"queries.embed", p.queries.embed});
  c.push_back({"queries.mlp.w1", p.queries.mlp_w1});
  c.push_back({"queries.mlp.w2", p.queries.mlp_w2});
  emit_proj(c, "decoder", p.decoder.attn);
  c.push_back({"decoder.pix", p.decoder.pix});
  c.push_back({"decoder.cls", p.decoder.cls});
  return c;
}

namespace {

class ParamReader {
 public:
  explicit ParamReader(const fixtures::FtenContainer& c) : c_(c) {}

  RealTensor take(const std::string& name, const Shape& want) {
    const RealTensor& t = fixtures::get_real(c_, name);
    if (t.shape != want) {
      throw std::invalid_argument("params entry '" + name + "' has shape " +
                                  shape_str(t.shape) + ", expected " + shape_str(want));
    }
    used_.insert(name);
    return t;
  }

  std::array<double, 4> take_bands(const std::string& name) {
    RealTensor t = take(name, {4});
    return {t(0), t(1), t(2), t(3)};
  }

  scmc::StcParams take_stc(const std::string& prefix, std::size_t c, std::size_t r) {
    scmc::StcParams p;
    p.spatial_gate = take(prefix + ".spatial", {1, 3, 3});
    p.temporal_w1 = take(prefix + ".temporal.w1", {c, c / r});
    p.temporal_w2 = take(prefix + ".temporal.w2", {c / r, c});
    p.channel_w1 = take(prefix + ".channel.w1", {c, c / r});
    p.channel_w2 = take(prefix + ".channel.w2", {c / r, c});
    return p;
  }

  scmc::AttentionProjection take_proj(const std::string& prefix, std::size_t c) {
    return {take(prefix + ".q", {c, c}), take(prefix + ".k", {c, c}),
            take(prefix + ".v", {c, c}), take(prefix + ".out", {c, c})};
  }

  void finish() const {
    for (const fixtures::FtenEntry& e : c_) {
      if (!used_.contains(e.name)) {
        throw std::invalid_argument("params container has unexpected entry '" + e.name + "'");
      }
    }
  }

 private:
  const fixtures::FtenContainer& c_;
  std::set<std::string> used_;
};

}  // namespace

ModelParams params_from_container(const fixtures::FtenContainer& c, const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t ch = cfg.channels, g = cfg.groups, r = cfg.reduction;
  const std::size_t cg = ch / g;
  ParamReader reader(c);

  ModelParams params;
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    const std::string s = "stage" + std::to_string(i + 1) + ".";
    StageParams sp;
    sp.fded_visual.dwc_kernels = reader.take(s + "fded.v.dwc", {ch, 3, 3});
    sp.fded_visual.group_weights = reader.take(s + "fded.v.group", {g, cg, cg});
    sp.fded_visual.conv3d_kernel = reader.take(s + "fded.v.conv3d", {ch, 3, 3, 3});
    sp.fded_visual.band_weights_v = reader.take_bands(s + "fded.v.band_weights");
    sp.fded_visual.ladder = cfg.ladder;

    sp.fded_audio.dwc_kernels = reader.take(s + "fded.a.dwc", {ch, 3, 3});
    sp.fded_audio.group_weights = reader.take(s + "fded.a.group", {g, cg, cg});
    sp.fded_audio.ca_w1 = reader.take(s + "fded.a.ca.w1", {ch, ch / r});
    sp.fded_audio.ca_w2 = reader.take(s + "fded.a.ca.w2", {ch / r, ch});
    sp.fded_audio.band_weights_a = reader.take_bands(s + "fded.a.band_weights");
    sp.fded_audio.ladder = cfg.ladder;

    for (std::size_t e = 0; e < cfg.experts; ++e) {
      const std::string x = s + "scmc.expert" + std::to_string(e) + ".";
      scmc::ExpertParams ep;
      ep.stc_q = reader.take_stc(x + "stc_q", ch, r);
      ep.stc_k = reader.take_stc(x + "stc_k", ch, r);
      ep.stc_v = reader.take_stc(x + "stc_v", ch, r);
      ep.audio_to_visual = reader.take_proj(x + "a2v", ch);
      ep.visual_to_audio = reader.take_proj(x + "v2a", ch);
      sp.cross.experts.push_back(std::move(ep));
    }
    sp.cross.router.stc_a = reader.take_stc(s + "scmc.router.stc_a", ch, r);
    sp.cross.router.stc_v = reader.take_stc(s + "scmc.router.stc_v", ch, r);
    sp.cross.router.mlp_a_w1 = reader.take(s + "scmc.router.mlp_a.w1", {ch, ch / 2});
    sp.cross.router.mlp_a_w2 = reader.take(s + "scmc.router.mlp_a.w2", {ch / 2, cfg.experts});
    sp.cross.router.mlp_v_w1 = reader.take(s + "scmc.router.mlp_v.w1", {ch, ch / 2});
    sp.cross.router.mlp_v_w2 = reader.take(s + "scmc.router.mlp_v.w2", {ch / 2, cfg.experts});
    if (i > 0) sp.fuse = reader.take(s + "fuse", {ch, 2 * ch});
    params.stages.push_back(std::move(sp));
  }

  params.queries.embed = reader.take("queries.embed", {cfg.queries, ch});
  params.queries.mlp_w1 = reader.take("queries.mlp.w1", {ch, ch});
  params.queries.mlp_w2 = reader.take("queries.mlp.w2", {ch, ch});
  params.decoder.attn = reader.take_proj("decoder", ch);
  params.decoder.pix = reader.take("decoder.pix", {ch, ch});
  params.decoder.cls = reader.take("decoder.cls", {ch, cfg.classes});
  reader.finish();
  return params;
}

namespace {

RealTensor fuse_concat(const RealTensor& carried, const RealTensor& level,
                       const RealTensor& fuse) {
  const std::size_t T = level.shape[0], C = level.shape[1];
  const std::size_t hw = level.shape[2] * level.shape[3];
  RealTensor out(level.shape);
  for (std::size_t t = 0; t < T; ++t) {
    const double* a = &carried.data[t * C * hw];
    const double* b = &level.data[t * C * hw];
    for (std::size_t c = 0; c < C; ++c) {
      double* dst = &out.data[(t * C + c) * hw];
      const double* wrow = &fuse.data[c * 2 * C];
      for (std::size_t k = 0; k < C; ++k) {
        const double w0 = wrow[k];
        const double w1 = wrow[C + k];
        const double* sa = &a[k * hw];
        const double* sb = &b[k * hw];
        for (std::size_t p = 0; p < hw; ++p) dst[p] += w0 * sa[p] + w1 * sb[p];
      }
    }
  }
  return out;
}

}  // namespace

StageOutput run_stages(const std::vector<RealTensor>& stage_features,
                       const RealTensor& audio_features, const ModelConfig& cfg,
                       const ModelParams& params) {
  cfg.validate();
  if (params.stages.size() != cfg.stages) {
    throw std::invalid_argument("params cover " + std::to_string(params.stages.size()) +
                                " stages, config wants " + std::to_string(cfg.stages));
  }
  if (stage_features.size() < cfg.stages) {
    throw std::invalid_argument("got " + std::to_string(stage_features.size()) +
                                " backbone levels, config wants " + std::to_string(cfg.stages));
  }
  if (audio_features.shape.size() != 4) {
    throw std::invalid_argument("audio features must be rank 4, got " +
                                shape_str(audio_features.shape));
  }
  const std::size_t T = audio_features.shape[0];
  if (audio_features.shape[1] != cfg.channels) {
    throw std::invalid_argument("audio features have " +
                                std::to_string(audio_features.shape[1]) + " channels, config " +
                                std::to_string(cfg.channels));
  }
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    const std::size_t res = cfg.size >> (i + 2);
    const Shape want{T, cfg.channels, res, res};
    if (stage_features[i].shape != want) {
      throw std::invalid_argument("backbone level " + std::to_string(i + 1) + " has shape " +
                                  shape_str(stage_features[i].shape) + ", expected " +
                                  shape_str(want));
    }
  }

  StageOutput out;
  RealTensor v_carry, a_carry;
  for (std::size_t i = 0; i < cfg.stages; ++i) {
    const StageParams& sp = params.stages[i];
    RealTensor in_v;
    if (i == 0) {
      in_v = stage_features[0];
    } else {
      const std::size_t res = cfg.size >> (i + 2);
      RealTensor resized = ops::bilinear_resize(v_carry, res, res);
      in_v = fuse_concat(resized, stage_features[i], sp.fuse);
    }
    const RealTensor& in_a = i == 0 ? audio_features : a_carry;

    fded::FdedOutput fv = fded::fded_forward(in_v, fded::Modality::Visual, sp.fded_visual);
    fded::FdedOutput fa = fded::fded_forward(in_a, fded::Modality::Audio, sp.fded_audio);
    scmc::ScmcOutput sc =
        scmc::scmc_forward(fv.features, fa.features, sp.cross, cfg.force_dense);

    v_carry = std::move(sc.visual);
    a_carry = std::move(sc.audio);
    out.routing.push_back({std::move(sc.visual_routing), std::move(sc.audio_routing)});
  }
  out.visual = std::move(v_carry);
  out.audio = std::move(a_carry);
  return out;
}

RealTensor derive_queries(const RealTensor& audio_final, const QueryParams& qp) {
  if (audio_final.shape.size() != 4) {
    throw std::invalid_argument("derive_queries: audio features must be rank 4, got " +
                                shape_str(audio_final.shape));
  }
  RealTensor pooled = ops::global_avg_pool(audio_final);
  RealTensor cond = ops::two_layer_mlp(pooled, qp.mlp_w1, qp.mlp_w2);
  const std::size_t T = cond.shape[0], C = cond.shape[1];
  const std::size_t nq = qp.embed.shape[0];
  if (qp.embed.shape.size() != 2 || qp.embed.shape[1] != C) {
    throw std::invalid_argument("derive_queries: embed shape " + shape_str(qp.embed.shape) +
                                " does not match width " + std::to_string(C));
  }
  RealTensor out({T, nq, C});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < nq; ++n) {
      for (std::size_t c = 0; c < C; ++c) out(t, n, c) = cond(t, c) + qp.embed(n, c);
    }
  }
  return out;
}

Prediction decode_masks(const RealTensor& queries, const RealTensor& visual_final,
                        const DecoderParams& head, std::size_t out_h, std::size_t out_w) {
  if (queries.shape.size() != 3) {
    throw std::invalid_argument("decode_masks: queries must be rank 3, got " +
                                shape_str(queries.shape));
  }
  if (visual_final.shape.size() != 4) {
    throw std::invalid_argument("decode_masks: visual features must be rank 4, got " +
                                shape_str(visual_final.shape));
  }
  const std::size_t T = queries.shape[0], nq = queries.shape[1], C = queries.shape[2];
  if (visual_final.shape[0] != T || visual_final.shape[1] != C) {
    throw std::invalid_argument("decode_masks: streams disagree, " + shape_str(queries.shape) +
                                " vs " + shape_str(visual_final.shape));
  }
  const std::size_t h = visual_final.shape[2], w = visual_final.shape[3];
  const std::size_t hw = h * w;
  const std::size_t classes = head.cls.shape.size() == 2 ? head.cls.shape[1] : 0;
  if (head.cls.shape.size() != 2 || head.cls.shape[0] != C) {
    throw std::invalid_argument("decode_masks: class projection has shape " +
                                shape_str(head.cls.shape));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(C));

  RealTensor small({T, nq, h, w});
  RealTensor class_logits({T, nq, classes});
  for (std::size_t t = 0; t < T; ++t) {
    RealTensor tok({hw, C});
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = &visual_final.data[(t * C + c) * hw];
      for (std::size_t p = 0; p < hw; ++p) tok(p, c) = src[p];
    }
    RealTensor qrow({nq, C});
    for (std::size_t n = 0; n < nq; ++n) {
      for (std::size_t c = 0; c < C; ++c) qrow(n, c) = queries(t, n, c);
    }

    RealTensor q = ops::matmul(qrow, head.attn.q);
    RealTensor k = ops::matmul(tok, head.attn.k);
    RealTensor v = ops::matmul(tok, head.attn.v);
    RealTensor scores({nq, hw});
    for (std::size_t n = 0; n < nq; ++n) {
      for (std::size_t p = 0; p < hw; ++p) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += q(n, c) * k(p, c);
        scores(n, p) = acc * scale;
      }
    }
    RealTensor refined = ops::matmul(ops::matmul(ops::softmax(scores), v), head.attn.out);
    for (std::size_t n = 0; n < nq; ++n) {
      for (std::size_t c = 0; c < C; ++c) refined(n, c) += qrow(n, c);
    }

    RealTensor pix = ops::matmul(tok, head.pix);
    for (std::size_t n = 0; n < nq; ++n) {
      for (std::size_t p = 0; p < hw; ++p) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += refined(n, c) * pix(p, c);
        small.data[((t * nq + n) * hw) + p] = acc;
      }
    }
    RealTensor cls = ops::matmul(refined, head.cls);
    for (std::size_t n = 0; n < nq; ++n) {
      for (std::size_t cl = 0; cl < classes; ++cl) class_logits(t, n, cl) = cls(n, cl);
    }
  }

  Prediction pred;
  pred.mask_logits = ops::bilinear_resize(small, out_h, out_w);
  pred.class_logits = std::move(class_logits);
  pred.binary_mask = RealTensor({T, out_h, out_w});
  const std::size_t ohw = out_h * out_w;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < ohw; ++p) {
      double best = 0.0;
      for (std::size_t n = 0; n < nq; ++n) {
        const double s = ops::sigmoid(pred.mask_logits.data[(t * nq + n) * ohw + p]);
        if (s > best) best = s;
      }
      pred.binary_mask.data[t * ohw + p] = best > 0.5 ? 1.0 : 0.0;
    }
  }
  return pred;
}

namespace {

void check_mask_pair(const RealTensor& pred, const RealTensor& gt, const char* who) {
  if (pred.shape.size() != 3 || gt.shape.size() != 3) {
    throw std::invalid_argument(std::string(who) + ": masks must be rank 3 [T,H,W]");
  }
  if (pred.shape != gt.shape) {
    throw std::invalid_argument(std::string(who) + ": mask shapes differ, " +
                                shape_str(pred.shape) + " vs " + shape_str(gt.shape));
  }
}

}  // namespace

std::vector<double> jaccard_per_frame(const RealTensor& pred, const RealTensor& gt) {
  check_mask_pair(pred, gt, "jaccard");
  const std::size_t T = pred.shape[0], hw = pred.shape[1] * pred.shape[2];
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < hw; ++p) {
      const bool a = pred.data[t * hw + p] != 0.0;
      const bool b = gt.data[t * hw + p] != 0.0;
      inter += a && b ? 1 : 0;
      uni += a || b ? 1 : 0;
    }
    out[t] = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

std::vector<double> fscore_per_frame(const RealTensor& pred, const RealTensor& gt) {
  check_mask_pair(pred, gt, "fscore");
  const std::size_t T = pred.shape[0], hw = pred.shape[1] * pred.shape[2];
  constexpr double beta2 = 0.3;
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t p = 0; p < hw; ++p) {
      const bool a = pred.data[t * hw + p] != 0.0;
      const bool b = gt.data[t * hw + p] != 0.0;
      if (a && b) ++tp;
      if (a && !b) ++fp;
      if (!a && b) ++fn;
    }
    const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double denom = beta2 * prec + rec;
    out[t] = denom > 0.0 ? (1.0 + beta2) * prec * rec / denom : 0.0;
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

double metric_jaccard(const RealTensor& pred, const RealTensor& gt) {
  return mean_of(jaccard_per_frame(pred, gt));
}

double metric_fscore(const RealTensor& pred, const RealTensor& gt) {
  return mean_of(fscore_per_frame(pred, gt));
}

}  // namespace favs::pipeline
