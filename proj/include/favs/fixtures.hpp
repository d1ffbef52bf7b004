#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "favs/tensor.hpp"

namespace favs::fixtures {

/// Filesystem failures (open/read/write), as opposed to malformed content.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

enum class FtenErrorKind {
  BadMagic,
  BadVersion,
  Truncated,
  TrailingBytes,
  BadName,
  BadDtype,
  BadRank,
  BadExtent,
  DuplicateName,
  Oversized,
};

/// Malformed or inconsistent container content.
class FtenError : public std::runtime_error {
 public:
  FtenError(FtenErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  FtenErrorKind kind() const { return kind_; }

 private:
  FtenErrorKind kind_;
};

using TensorValue = std::variant<RealTensor, ComplexTensor>;

struct FtenEntry {
  std::string name;
  TensorValue value;
};

/// Ordered named-tensor container. Serialized form: "FTEN" magic, one
/// version byte (0x01), little-endian u32 entry count, then per entry a u16
/// name length, the name bytes, a dtype byte (0 real f64, 1 complex f64
/// interleaved), a rank byte, rank u32 extents, and the payload. No padding
/// anywhere; round trips are bit-exact.
using FtenContainer = std::vector<FtenEntry>;

std::vector<std::uint8_t> encode_ften(const FtenContainer& entries);
FtenContainer decode_ften(std::span<const std::uint8_t> bytes);

void write_ften(const std::string& path, const FtenContainer& entries);
FtenContainer read_ften(const std::string& path);

const FtenEntry* find_entry(const FtenContainer& c, const std::string& name);
bool has_entry(const FtenContainer& c, const std::string& name);
const RealTensor& get_real(const FtenContainer& c, const std::string& name);
const ComplexTensor& get_complex(const FtenContainer& c, const std::string& name);

enum class Texture { Checkerboard, Smooth };
enum class Motion { Linear, Static };

struct FixtureManifest {
  std::uint64_t seed = 42;
  std::size_t frames = 2;
  std::size_t size = 64;
  std::size_t channels = 32;
  Texture texture = Texture::Checkerboard;
  Motion motion = Motion::Linear;
  std::size_t tone_index = 0;
  double noise_level = 0.05;

  std::string to_text() const;
};

/// A complete synthetic scene: three-channel frames with one moving textured
/// object, per-frame ground-truth masks, a mel-style spectrogram, pooled and
/// projected per-stage visual features, and tiled audio features.
struct SceneFixture {
  FixtureManifest manifest;
  RealTensor frames;        // [T,3,H,W]
  RealTensor gt_masks;      // [T,H,W] zeros and ones
  RealTensor spectrogram;   // [T,96,64]
  std::vector<RealTensor> stage_features;  // stage i: [T,C,H/2^(i+1),W/2^(i+1)]
  RealTensor audio_features;               // [T,C,4,4]

  FtenContainer to_container() const;
  static SceneFixture from_container(const FtenContainer& c);
};

const char* texture_name(Texture t);
const char* motion_name(Motion m);
Texture parse_texture(const std::string& s);
Motion parse_motion(const std::string& s);

/// Deterministic scene synthesis. `size` must be a power of two >= 32 so the
/// three pooled stages stay nonempty.
SceneFixture gen_scene(std::uint64_t seed, std::size_t frames, std::size_t size,
                       std::size_t channels, Texture texture, Motion motion);

/// Synthetic spectrogram: a three-row ridge at `tone_index` (rows clamped to
/// the 0..95 range, weights 0.5/1.0/0.5) with slow temporal modulation, and
/// uniform noise confined to rows 72..95. tone_index must stay below 71 so
/// the ridge and the noise block never overlap.
RealTensor mel_proxy(std::size_t tone_index, double noise_level, std::uint64_t seed,
                     std::size_t frames);

}  // namespace favs::fixtures
