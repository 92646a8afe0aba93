#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tmd/raster.hpp"

namespace tmd {

using TextChunks = std::map<std::string, std::string>;

/// 8-bit RGBA PNG with an sRGB chunk and the given tEXt entries (keys 1-79 Latin-1 bytes).
std::vector<std::uint8_t> encode_png(const Raster& image, const TextChunks& text = {});

struct DecodedPng {
  Raster image;
  TextChunks text;
  bool has_srgb = false;
};

/// Decodes any PNG colour type to 8-bit RGBA. Throws Error(CorruptFile).
DecodedPng decode_png(std::span<const std::uint8_t> bytes);

/// Chunk type names in file order; throws CorruptFile on a malformed stream.
std::vector<std::string> png_chunk_types(std::span<const std::uint8_t> bytes);

}  // namespace tmd
