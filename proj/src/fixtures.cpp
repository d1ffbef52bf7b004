#include "favs/fixtures.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace favs::fixtures {

namespace {

constexpr std::size_t kMaxElems = std::size_t{1} << 26;

void push_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void push_f64(std::vector<std::uint8_t>& out, double d) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FtenError(FtenErrorKind::Truncated,
                      "container truncated: need " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_));
    }
    auto view = bytes_.subspan(pos_, n);
    pos_ += n;
    return view;
  }

  std::uint8_t u8() { return take(1)[0]; }

  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (std::uint16_t{b[1]} << 8));
  }

  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[static_cast<std::size_t>(i)]} << (8 * i);
    return v;
  }

  double f64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[static_cast<std::size_t>(i)]} << (8 * i);
    return std::bit_cast<double>(v);
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void check_name(const std::string& name) {
  if (name.empty() || name.size() > 0xffff) {
    throw FtenError(FtenErrorKind::BadName, "entry name must be 1..65535 bytes");
  }
  for (char ch : name) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 1 || u > 127) {
      throw FtenError(FtenErrorKind::BadName, "entry name '" + name + "' is not plain ASCII");
    }
  }
}

const Shape& value_shape(const TensorValue& v) {
  if (std::holds_alternative<RealTensor>(v)) return std::get<RealTensor>(v).shape;
  return std::get<ComplexTensor>(v).shape;
}

}  // namespace

std::vector<std::uint8_t> encode_ften(const FtenContainer& entries) {
  if (entries.size() > 0xffffffffULL) {
    throw FtenError(FtenErrorKind::Oversized, "too many entries");
  }
  std::set<std::string> seen;
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'F', 'T', 'E', 'N'});
  out.push_back(0x01);
  push_u32(out, static_cast<std::uint32_t>(entries.size()));

  for (const FtenEntry& e : entries) {
    check_name(e.name);
    if (!seen.insert(e.name).second) {
      throw FtenError(FtenErrorKind::DuplicateName, "duplicate entry name '" + e.name + "'");
    }
    const Shape& shape = value_shape(e.value);
    if (shape.empty() || shape.size() > 5) {
      throw FtenError(FtenErrorKind::BadRank,
                      "entry '" + e.name + "' has rank " + std::to_string(shape.size()));
    }
    std::size_t numel = 1;
    for (std::size_t ext : shape) {
      if (ext == 0 || ext > 0xffffffffULL) {
        throw FtenError(FtenErrorKind::BadExtent, "entry '" + e.name + "' has extent " +
                                                      std::to_string(ext));
      }
      numel *= ext;
      if (numel > kMaxElems) {
        throw FtenError(FtenErrorKind::Oversized, "entry '" + e.name + "' exceeds element cap");
      }
    }

    push_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    if (std::holds_alternative<RealTensor>(e.value)) {
      const RealTensor& t = std::get<RealTensor>(e.value);
      out.push_back(0x00);
      out.push_back(static_cast<std::uint8_t>(shape.size()));
      for (std::size_t ext : shape) push_u32(out, static_cast<std::uint32_t>(ext));
      for (double d : t.data) push_f64(out, d);
    } else {
      const ComplexTensor& t = std::get<ComplexTensor>(e.value);
      out.push_back(0x01);
      out.push_back(static_cast<std::uint8_t>(shape.size()));
      for (std::size_t ext : shape) push_u32(out, static_cast<std::uint32_t>(ext));
      for (const std::complex<double>& z : t.data) {
        push_f64(out, z.real());
        push_f64(out, z.imag());
      }
    }
  }
  return out;
}

FtenContainer decode_ften(std::span<const std::uint8_t> bytes) {
  Cursor cur(bytes);
  auto magic = cur.take(4);
  if (!(magic[0] == 'F' && magic[1] == 'T' && magic[2] == 'E' && magic[3] == 'N')) {
    throw FtenError(FtenErrorKind::BadMagic, "bad magic, expected FTEN");
  }
  const std::uint8_t version = cur.u8();
  if (version != 0x01) {
    throw FtenError(FtenErrorKind::BadVersion,
                    "unsupported version " + std::to_string(int{version}));
  }
  const std::uint32_t count = cur.u32();

  FtenContainer entries;
  entries.reserve(std::min<std::size_t>(count, 1024));
  std::set<std::string> seen;
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::uint16_t name_len = cur.u16();
    if (name_len == 0) {
      throw FtenError(FtenErrorKind::BadName, "entry " + std::to_string(n) + " has empty name");
    }
    auto name_bytes = cur.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    check_name(name);
    if (!seen.insert(name).second) {
      throw FtenError(FtenErrorKind::DuplicateName, "duplicate entry name '" + name + "'");
    }

    const std::uint8_t dtype = cur.u8();
    if (dtype > 1) {
      throw FtenError(FtenErrorKind::BadDtype,
                      "entry '" + name + "' has dtype " + std::to_string(int{dtype}));
    }
    const std::uint8_t rank = cur.u8();
    if (rank < 1 || rank > 5) {
      throw FtenError(FtenErrorKind::BadRank,
                      "entry '" + name + "' has rank " + std::to_string(int{rank}));
    }
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::size_t a = 0; a < rank; ++a) {
      const std::uint32_t ext = cur.u32();
      if (ext == 0) {
        throw FtenError(FtenErrorKind::BadExtent, "entry '" + name + "' has a zero extent");
      }
      shape[a] = ext;
      numel *= ext;
      if (numel > kMaxElems) {
        throw FtenError(FtenErrorKind::Oversized, "entry '" + name + "' exceeds element cap");
      }
    }

    // Check the full payload is present before allocating the tensor, so a
    // corrupt header cannot trigger a large allocation.
    const std::size_t payload = numel * (dtype == 0 ? 8 : 16);
    if (cur.remaining() < payload) {
      throw FtenError(FtenErrorKind::Truncated,
                      "entry '" + name + "' payload needs " + std::to_string(payload) +
                          " bytes, " + std::to_string(cur.remaining()) + " left");
    }

    if (dtype == 0) {
      RealTensor t(shape);
      for (std::size_t i = 0; i < numel; ++i) t.data[i] = cur.f64();
      entries.push_back({std::move(name), std::move(t)});
    } else {
      ComplexTensor t(shape);
      for (std::size_t i = 0; i < numel; ++i) {
        const double re = cur.f64();
        const double im = cur.f64();
        t.data[i] = {re, im};
      }
      entries.push_back({std::move(name), std::move(t)});
    }
  }
  if (cur.remaining() != 0) {
    throw FtenError(FtenErrorKind::TrailingBytes,
                    std::to_string(cur.remaining()) + " trailing bytes after last entry");
  }
  return entries;
}

void write_ften(const std::string& path, const FtenContainer& entries) {
  std::vector<std::uint8_t> bytes = encode_ften(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

FtenContainer read_ften(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return decode_ften(bytes);
}

const FtenEntry* find_entry(const FtenContainer& c, const std::string& name) {
  for (const FtenEntry& e : c) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

bool has_entry(const FtenContainer& c, const std::string& name) {
  return find_entry(c, name) != nullptr;
}

const RealTensor& get_real(const FtenContainer& c, const std::string& name) {
  const FtenEntry* e = find_entry(c, name);
  if (e == nullptr) throw std::invalid_argument("container has no entry '" + name + "'");
  if (!std::holds_alternative<RealTensor>(e->value)) {
    throw std::invalid_argument("entry '" + name + "' is complex, expected real");
  }
  return std::get<RealTensor>(e->value);
}

const ComplexTensor& get_complex(const FtenContainer& c, const std::string& name) {
  const FtenEntry* e = find_entry(c, name);
  if (e == nullptr) throw std::invalid_argument("container has no entry '" + name + "'");
  if (!std::holds_alternative<ComplexTensor>(e->value)) {
    throw std::invalid_argument("entry '" + name + "' is real, expected complex");
  }
  return std::get<ComplexTensor>(e->value);
}

const char* texture_name(Texture t) {
  return t == Texture::Checkerboard ? "checkerboard" : "smooth";
}

const char* motion_name(Motion m) { return m == Motion::Linear ? "linear" : "static"; }

Texture parse_texture(const std::string& s) {
  if (s == "checkerboard") return Texture::Checkerboard;
  if (s == "smooth") return Texture::Smooth;
  throw std::invalid_argument("unknown texture '" + s + "' (checkerboard|smooth)");
}

Motion parse_motion(const std::string& s) {
  if (s == "linear") return Motion::Linear;
  if (s == "static") return Motion::Static;
  throw std::invalid_argument("unknown motion '" + s + "' (linear|static)");
}

std::string FixtureManifest::to_text() const {
  std::ostringstream out;
  out << "seed=" << seed << "\n";
  out << "frames=" << frames << "\n";
  out << "size=" << size << "\n";
  out << "channels=" << channels << "\n";
  out << "texture=" << texture_name(texture) << "\n";
  out << "motion=" << motion_name(motion) << "\n";
  out << "tone_index=" << tone_index << "\n";
  out << "noise_level=" << noise_level << "\n";
  return out.str();
}

namespace {

constexpr double kFrameNoiseAmp = 0.01;
constexpr double kSpectrogramNoise = 0.05;
constexpr std::size_t kMelRows = 96;
constexpr std::size_t kMelCols = 64;
constexpr std::size_t kNoiseRowStart = 72;

RealTensor meta_tensor(const FixtureManifest& m) {
  RealTensor meta({9});
  meta.data = {static_cast<double>(m.seed >> 32),
               static_cast<double>(m.seed & 0xffffffffULL),
               static_cast<double>(m.frames),
               static_cast<double>(m.size),
               static_cast<double>(m.channels),
               m.texture == Texture::Checkerboard ? 0.0 : 1.0,
               m.motion == Motion::Linear ? 0.0 : 1.0,
               static_cast<double>(m.tone_index),
               m.noise_level};
  return meta;
}

FixtureManifest manifest_from_meta(const RealTensor& meta) {
  FixtureManifest m;
  if (meta.size() != 9) return m;
  m.seed = (static_cast<std::uint64_t>(meta(0)) << 32) | static_cast<std::uint64_t>(meta(1));
  m.frames = static_cast<std::size_t>(meta(2));
  m.size = static_cast<std::size_t>(meta(3));
  m.channels = static_cast<std::size_t>(meta(4));
  m.texture = meta(5) == 0.0 ? Texture::Checkerboard : Texture::Smooth;
  m.motion = meta(6) == 0.0 ? Motion::Linear : Motion::Static;
  m.tone_index = static_cast<std::size_t>(meta(7));
  m.noise_level = meta(8);
  return m;
}

}  // namespace

FtenContainer SceneFixture::to_container() const {
  FtenContainer c;
  c.push_back({"meta", meta_tensor(manifest)});
  c.push_back({"frames", frames});
  c.push_back({"gt_masks", gt_masks});
  c.push_back({"spectrogram", spectrogram});
  for (std::size_t i = 0; i < stage_features.size(); ++i) {
    c.push_back({"stage" + std::to_string(i + 1) + ".features", stage_features[i]});
  }
  c.push_back({"audio_features", audio_features});
  return c;
}

SceneFixture SceneFixture::from_container(const FtenContainer& c) {
  SceneFixture fx;
  if (has_entry(c, "meta")) fx.manifest = manifest_from_meta(get_real(c, "meta"));
  fx.frames = get_real(c, "frames");
  fx.gt_masks = get_real(c, "gt_masks");
  fx.spectrogram = get_real(c, "spectrogram");
  for (std::size_t i = 1;; ++i) {
    const std::string name = "stage" + std::to_string(i) + ".features";
    if (!has_entry(c, name)) break;
    fx.stage_features.push_back(get_real(c, name));
  }
  fx.audio_features = get_real(c, "audio_features");
  return fx;
}

RealTensor mel_proxy(std::size_t tone_index, double noise_level, std::uint64_t seed,
                     std::size_t frames) {
  if (frames < 1) throw std::invalid_argument("mel_proxy: frames must be >= 1");
  if (tone_index + 1 >= kNoiseRowStart) {
    throw std::invalid_argument("mel_proxy: tone_index " + std::to_string(tone_index) +
                                " collides with the noise block starting at row " +
                                std::to_string(kNoiseRowStart));
  }
  if (!(noise_level >= 0.0)) {
    throw std::invalid_argument("mel_proxy: noise_level must be >= 0");
  }

  RealTensor spec({frames, kMelRows, kMelCols});
  const double tau_step = 2.0 * std::numbers::pi / static_cast<double>(kMelCols);
  for (std::size_t t = 0; t < frames; ++t) {
    for (int dr = -1; dr <= 1; ++dr) {
      const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(tone_index) + dr;
      if (row < 0 || row >= static_cast<std::ptrdiff_t>(kMelRows)) continue;
      const double amp = dr == 0 ? 1.0 : 0.5;
      for (std::size_t col = 0; col < kMelCols; ++col) {
        const double wobble =
            0.8 + 0.2 * std::cos(tau_step * static_cast<double>(col) +
                                 0.5 * static_cast<double>(t));
        spec(t, static_cast<std::size_t>(row), col) += amp * wobble;
      }
    }
  }

  SplitMix64 rng(seed);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t row = kNoiseRowStart; row < kMelRows; ++row) {
      for (std::size_t col = 0; col < kMelCols; ++col) {
        spec(t, row, col) += noise_level * rng.next_double();
      }
    }
  }
  return spec;
}

SceneFixture gen_scene(std::uint64_t seed, std::size_t frames, std::size_t size,
                       std::size_t channels, Texture texture, Motion motion) {
  if (frames < 1) throw std::invalid_argument("gen_scene: frames must be >= 1");
  if (channels < 1) throw std::invalid_argument("gen_scene: channels must be >= 1");
  if (size < 32 || (size & (size - 1)) != 0) {
    throw std::invalid_argument("gen_scene: size must be a power of two >= 32, got " +
                                std::to_string(size));
  }
  const std::size_t H = size, W = size;
  const std::size_t oh = H / 4, ow = W / 4;

  SplitMix64 master(seed);
  const std::uint64_t geo_seed = master.next_u64();
  const std::uint64_t noise_seed = master.next_u64();
  const std::uint64_t proj_seed = master.next_u64();
  const std::uint64_t audio_seed = master.next_u64();
  const std::uint64_t aproj_seed = master.next_u64();

  SplitMix64 geo(geo_seed);
  const std::size_t p0y = geo.next_u64() % (H - oh + 1);
  const std::size_t p0x = geo.next_u64() % (W - ow + 1);
  static constexpr std::ptrdiff_t kSteps[4] = {-2, -1, 1, 2};
  std::ptrdiff_t vy = kSteps[geo.next_u64() & 3];
  std::ptrdiff_t vx = kSteps[geo.next_u64() & 3];
  if (motion == Motion::Static) vy = vx = 0;
  const std::size_t tone = geo.next_u64() % (kNoiseRowStart - 2);

  SceneFixture fx;
  fx.manifest = {seed, frames, size, channels, texture, motion, tone, kSpectrogramNoise};
  fx.frames = RealTensor({frames, 3, H, W});
  fx.gt_masks = RealTensor({frames, H, W});

  const double pi = std::numbers::pi;
  static constexpr double kChanGain[3] = {1.0, 0.8, 0.6};
  SplitMix64 noise(noise_seed);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto offset = [&](std::size_t origin, std::ptrdiff_t vel, std::size_t limit) {
      const std::ptrdiff_t raw =
          static_cast<std::ptrdiff_t>(origin) + vel * static_cast<std::ptrdiff_t>(t);
      return static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(raw, 0, static_cast<std::ptrdiff_t>(limit)));
    };
    const std::size_t py = offset(p0y, vy, H - oh);
    const std::size_t px = offset(p0x, vx, W - ow);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double gain = kChanGain[ch];
      const double phy = 0.7 + 0.9 * static_cast<double>(ch);
      const double phx = 0.4 + 0.6 * static_cast<double>(ch);
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          double v = 0.05 *
                     std::cos(2.0 * pi * static_cast<double>(y) / static_cast<double>(H) + phy) *
                     std::cos(2.0 * pi * static_cast<double>(x) / static_cast<double>(W) + phx);
          const bool inside = y >= py && y < py + oh && x >= px && x < px + ow;
          if (inside) {
            const double ly = static_cast<double>(y - py) + 0.5;
            const double lx = static_cast<double>(x - px) + 0.5;
            const double wy = std::sin(pi * ly / static_cast<double>(oh));
            const double wx = std::sin(pi * lx / static_cast<double>(ow));
            const double bump = wy * wy * wx * wx;
            if (texture == Texture::Checkerboard) {
              const double sign = ((y + x) & 1) ? -1.0 : 1.0;
              v += 0.7 * gain * sign * bump;
            } else {
              v += 0.5 * gain * bump;
            }
            if (ch == 0) fx.gt_masks(t, y, x) = 1.0;
          }
          v += kFrameNoiseAmp * noise.next_symmetric(1.0);
          fx.frames(t, ch, y, x) = v;
        }
      }
    }
  }

  fx.spectrogram = mel_proxy(tone, kSpectrogramNoise, audio_seed, frames);

  SplitMix64 proj(proj_seed);
  for (std::size_t stage = 1; stage <= 3; ++stage) {
    const std::size_t factor = std::size_t{1} << (stage + 1);
    const std::size_t hs = H / factor, ws = W / factor;
    RealTensor pooled({frames, 3, hs, ws});
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t yy = 0; yy < hs; ++yy) {
          for (std::size_t xx = 0; xx < ws; ++xx) {
            double acc = 0.0;
            for (std::size_t dy = 0; dy < factor; ++dy) {
              for (std::size_t dx = 0; dx < factor; ++dx) {
                acc += fx.frames(t, ch, yy * factor + dy, xx * factor + dx);
              }
            }
            pooled(t, ch, yy, xx) = acc / static_cast<double>(factor * factor);
          }
        }
      }
    }
    RealTensor mix = InitSpec{proj.next_u64(), InitScheme::UniformScaled,
                              1.0 / std::sqrt(3.0)}
                         .make({channels, 3});
    RealTensor feat({frames, channels, hs, ws});
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < hs * ws; ++p) {
          double acc = 0.0;
          for (std::size_t k = 0; k < 3; ++k) {
            acc += mix(c, k) * pooled.data[(t * 3 + k) * hs * ws + p];
          }
          feat.data[((t * channels + c) * hs * ws) + p] = acc;
        }
      }
    }
    fx.stage_features.push_back(std::move(feat));
  }

  RealTensor avec({frames, kMelRows});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t m = 0; m < kMelRows; ++m) {
      double acc = 0.0;
      for (std::size_t col = 0; col < kMelCols; ++col) acc += fx.spectrogram(t, m, col);
      avec(t, m) = acc / static_cast<double>(kMelCols);
    }
  }
  RealTensor amix = InitSpec{aproj_seed, InitScheme::UniformScaled,
                             1.0 / std::sqrt(static_cast<double>(kMelRows))}
                        .make({channels, kMelRows});
  fx.audio_features = RealTensor({frames, channels, 4, 4});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (std::size_t m = 0; m < kMelRows; ++m) acc += amix(c, m) * avec(t, m);
      for (std::size_t p = 0; p < 16; ++p) {
        fx.audio_features.data[(t * channels + c) * 16 + p] = acc;
      }
    }
  }
  return fx;
}

}  // namespace favs::fixtures
