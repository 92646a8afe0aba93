#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tmd {

struct Rgba {
  std::uint8_t r = 0, g = 0, b = 0, a = 255;

  friend bool operator==(const Rgba&, const Rgba&) = default;
};

/// Row-major 8-bit RGBA image. The only in-memory raster model.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgba fill = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ <= 0 || height_ <= 0; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  Rgba& at(int x, int y) { return pixels_[index(x, y)]; }
  const Rgba& at(int x, int y) const { return pixels_[index(x, y)]; }

  std::span<Rgba> pixels() noexcept { return pixels_; }
  std::span<const Rgba> pixels() const noexcept { return pixels_; }

  /// Interleaved RGBA bytes, 4 per pixel.
  std::vector<std::uint8_t> to_bytes() const;
  static Raster from_bytes(int width, int height, std::span<const std::uint8_t> rgba);

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Rgba> pixels_;
};

/// Binary mask; every cell is 0 or 1.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, std::uint8_t fill = 0);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ <= 0 || height_ <= 0; }

  std::uint8_t at(int x, int y) const { return cells_[index(x, y)]; }
  void set(int x, int y, bool on) { cells_[index(x, y)] = on ? 1 : 0; }

  std::span<const std::uint8_t> cells() const noexcept { return cells_; }
  std::size_t count_set() const noexcept;
  bool is_binary() const noexcept;

  /// Rasterized mask: pixels whose luminance (alpha-weighted) is >= 128 become 1.
  static Mask from_raster(const Raster& image);
  /// White where set, black elsewhere.
  Raster to_raster() const;
  /// Wraps raw cell values without thresholding; used by validation tests.
  static Mask from_cells(int width, int height, std::vector<std::uint8_t> cells);

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Rec. 601 luma in [0, 255].
double luminance(const Rgba& p) noexcept;

}  // namespace tmd
