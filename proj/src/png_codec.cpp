#include "tmd/png_codec.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cstring>

#include "tmd/error.hpp"

namespace tmd {

namespace {

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> make_chunk(const char type[4], std::span<const std::uint8_t> data) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + data.size());
  write_be32(out, static_cast<std::uint32_t>(data.size()));
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  write_be32(out, static_cast<std::uint32_t>(crc));
  return out;
}

struct ChunkView {
  std::string type;
  std::size_t offset;  // start of length field
  std::span<const std::uint8_t> data;
};

std::vector<ChunkView> walk_chunks(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) {
    throw Error(ErrorCode::CorruptFile, "not a PNG stream");
  }
  std::vector<ChunkView> chunks;
  std::size_t pos = 8;
  bool saw_end = false;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 12) throw Error(ErrorCode::CorruptFile, "truncated PNG chunk header");
    const std::uint32_t len = read_be32(bytes.data() + pos);
    if (bytes.size() - pos - 12 < len) throw Error(ErrorCode::CorruptFile, "truncated PNG chunk");
    const auto* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const auto data = bytes.subspan(pos + 8, len);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (len > 0) crc = crc32(crc, data.data(), static_cast<uInt>(len));
    if (static_cast<std::uint32_t>(crc) != read_be32(bytes.data() + pos + 8 + len)) {
      throw Error(ErrorCode::CorruptFile, "PNG chunk CRC mismatch");
    }
    chunks.push_back({std::string(type, 4), pos, data});
    pos += 12 + len;
    if (chunks.back().type == "IEND") {
      saw_end = true;
      break;
    }
  }
  if (!saw_end) throw Error(ErrorCode::CorruptFile, "PNG stream has no IEND");
  if (chunks.empty() || chunks.front().type != "IHDR") {
    throw Error(ErrorCode::CorruptFile, "PNG stream does not start with IHDR");
  }
  return chunks;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Raster& image, const TextChunks& text) {
  if (image.empty()) throw Error(ErrorCode::EmptyImage, "cannot encode an empty raster");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGBA;

  const auto rgba = image.to_bytes();
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, rgba.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png size query failed: ") + img.message);
  }
  std::vector<std::uint8_t> raw(size);
  if (!png_image_write_to_memory(&img, raw.data(), &size, 0, rgba.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encode failed: ") + img.message);
  }
  raw.resize(size);

  const auto chunks = walk_chunks(raw);
  const bool has_srgb = std::any_of(chunks.begin(), chunks.end(),
                                    [](const ChunkView& c) { return c.type == "sRGB"; });
  // Splice extra chunks right after IHDR.
  const std::size_t insert_at = chunks[1].offset;
  std::vector<std::uint8_t> extra;
  if (!has_srgb) {
    const std::uint8_t intent = 0;  // perceptual
    const auto c = make_chunk("sRGB", std::span(&intent, 1));
    extra.insert(extra.end(), c.begin(), c.end());
  }
  for (const auto& [key, value] : text) {
    if (key.empty() || key.size() > 79) throw std::invalid_argument("PNG text key must be 1-79 bytes");
    std::vector<std::uint8_t> data(key.begin(), key.end());
    data.push_back(0);
    data.insert(data.end(), value.begin(), value.end());
    const auto c = make_chunk("tEXt", data);
    extra.insert(extra.end(), c.begin(), c.end());
  }
  std::vector<std::uint8_t> out;
  out.reserve(raw.size() + extra.size());
  out.insert(out.end(), raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(insert_at));
  out.insert(out.end(), extra.begin(), extra.end());
  out.insert(out.end(), raw.begin() + static_cast<std::ptrdiff_t>(insert_at), raw.end());
  return out;
}

DecodedPng decode_png(std::span<const std::uint8_t> bytes) {
  DecodedPng out;
  for (const auto& c : walk_chunks(bytes)) {
    if (c.type == "sRGB") out.has_srgb = true;
    if (c.type == "tEXt") {
      const auto* begin = reinterpret_cast<const char*>(c.data.data());
      const std::string_view body(begin, c.data.size());
      const auto nul = body.find('\0');
      if (nul == std::string_view::npos) throw Error(ErrorCode::CorruptFile, "tEXt chunk without separator");
      out.text.emplace(std::string(body.substr(0, nul)), std::string(body.substr(nul + 1)));
    }
  }

  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::CorruptFile, std::string("png header: ") + img.message);
  }
  img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgba.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorCode::CorruptFile, std::string("png data: ") + img.message);
  }
  out.image = Raster::from_bytes(static_cast<int>(img.width), static_cast<int>(img.height), rgba);
  return out;
}

std::vector<std::string> png_chunk_types(std::span<const std::uint8_t> bytes) {
  std::vector<std::string> out;
  for (const auto& c : walk_chunks(bytes)) out.push_back(c.type);
  return out;
}

}  // namespace tmd
