#include "tmd/raster.hpp"

#include <algorithm>
#include <stdexcept>

namespace tmd {

Raster::Raster(int width, int height, Rgba fill)
    : width_(std::max(width, 0)), height_(std::max(height, 0)), pixels_(pixel_count(), fill) {}

std::vector<std::uint8_t> Raster::to_bytes() const {
  std::vector<std::uint8_t> out;
  out.reserve(pixels_.size() * 4);
  for (const auto& p : pixels_) {
    out.insert(out.end(), {p.r, p.g, p.b, p.a});
  }
  return out;
}

Raster Raster::from_bytes(int width, int height, std::span<const std::uint8_t> rgba) {
  Raster out(width, height);
  if (rgba.size() != out.pixel_count() * 4) {
    throw std::invalid_argument("rgba buffer size does not match dimensions");
  }
  for (std::size_t i = 0; i < out.pixels_.size(); ++i) {
    out.pixels_[i] = {rgba[4 * i], rgba[4 * i + 1], rgba[4 * i + 2], rgba[4 * i + 3]};
  }
  return out;
}

Mask::Mask(int width, int height, std::uint8_t fill)
    : width_(std::max(width, 0)),
      height_(std::max(height, 0)),
      cells_(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_),
             fill ? 1 : 0) {}

std::size_t Mask::count_set() const noexcept {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

bool Mask::is_binary() const noexcept {
  return std::all_of(cells_.begin(), cells_.end(), [](std::uint8_t c) { return c <= 1; });
}

Mask Mask::from_raster(const Raster& image) {
  Mask out(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto& p = image.at(x, y);
      out.set(x, y, luminance(p) * p.a / 255.0 >= 128.0);
    }
  }
  return out;
}

Raster Mask::to_raster() const {
  Raster out(width_, height_);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const std::uint8_t v = cells_[i] ? 255 : 0;
    out.pixels()[i] = {v, v, v, 255};
  }
  return out;
}

Mask Mask::from_cells(int width, int height, std::vector<std::uint8_t> cells) {
  Mask out;
  if (cells.size() != static_cast<std::size_t>(std::max(width, 0)) *
                          static_cast<std::size_t>(std::max(height, 0))) {
    throw std::invalid_argument("mask cell count does not match dimensions");
  }
  out.width_ = width;
  out.height_ = height;
  out.cells_ = std::move(cells);
  return out;
}

double luminance(const Rgba& p) noexcept {
  return 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
}

}  // namespace tmd
