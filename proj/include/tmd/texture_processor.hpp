#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmd/core_model.hpp"
#include "tmd/metering.hpp"
#include "tmd/raster.hpp"

namespace tmd {

struct Provenance {
  std::string request_id;
  ScenarioKind scenario = ScenarioKind::CreativePrompt;
  std::string backend_id;
  std::string original_prompt;
  std::string tuned_prompt;
  std::uint64_t seed = 0;
  MeterRecord meter;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

nlohmann::json to_json(const Provenance& p);
Provenance provenance_from_json(const nlohmann::json& j);

/// Standardized output texture: square power-of-two RGBA plus where it came from.
struct TextureArtifact {
  Raster pixels;
  std::string format = "png";
  Provenance provenance;

  int width() const noexcept { return pixels.width(); }
  int height() const noexcept { return pixels.height(); }

  /// Power-of-two square dimensions and fully populated provenance.
  bool is_valid() const;
};

bool is_power_of_two(int v) noexcept;

/// Standardization target: square side 256, 512 or 1024, sRGB PNG.
class StandardizationTarget {
 public:
  static StandardizationTarget of(int size);  // throws Error(InvalidConfig)
  int size() const noexcept { return size_; }
  friend bool operator==(const StandardizationTarget&, const StandardizationTarget&) = default;

 private:
  explicit StandardizationTarget(int size) : size_(size) {}
  int size_ = 512;
};

struct CropRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  friend bool operator==(const CropRect&, const CropRect&) = default;
};

/// Largest centered square inside a width x height image.
CropRect center_square(int width, int height);

Raster crop(const Raster& src, const CropRect& rect);

/// Bilinear resampling with pixel-center alignment:
/// src = (dst + 0.5) * (src_size / dst_size) - 0.5, clamped to the edge,
/// each channel rounded half away from zero.
Raster resize_bilinear(const Raster& src, int out_width, int out_height);

/// Center-crop to a square, then bilinear scale to the target side. Same-size
/// square inputs pass through untouched. Throws Error(EmptyImage).
Raster standardize_pixels(const Raster& raw, const StandardizationTarget& target);
TextureArtifact standardize(const Raster& raw, const StandardizationTarget& target);

/// out[p] = mask[p] ? patch[p] : base[p]. Throws Error(DimensionMismatch).
Raster composite_inpaint(const Raster& base, const Mask& mask, const Raster& patch);

/// What provenance is embedded in the PNG "tmdf" text chunk.
enum class ProvenanceEmbed {
  full,          // everything, including request_id and run timings
  reproducible,  // only fields that are a function of the request content
};

std::vector<std::uint8_t> encode_artifact(const TextureArtifact& artifact,
                                          ProvenanceEmbed embed = ProvenanceEmbed::full);
/// Throws Error(CorruptFile) on a malformed stream or a missing/invalid "tmdf" chunk.
TextureArtifact decode_artifact(std::span<const std::uint8_t> bytes);

inline constexpr const char* kProvenanceChunkKey = "tmdf";

}  // namespace tmd
