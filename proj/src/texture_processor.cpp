#include "tmd/texture_processor.hpp"

#include <algorithm>
#include <cmath>

#include "tmd/error.hpp"
#include "tmd/png_codec.hpp"

namespace tmd {

using nlohmann::json;

json to_json(const Provenance& p) {
  return json{{"request_id", p.request_id},
              {"scenario", to_string(p.scenario)},
              {"backend_id", p.backend_id},
              {"original_prompt", p.original_prompt},
              {"tuned_prompt", p.tuned_prompt},
              {"seed", p.seed},
              {"meter", p.meter}};
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.request_id = j.at("request_id").get<std::string>();
  const auto kind = parse_scenario_kind(j.at("scenario").get<std::string>());
  if (!kind) throw Error(ErrorCode::CorruptFile, "unknown scenario in provenance");
  p.scenario = *kind;
  p.backend_id = j.at("backend_id").get<std::string>();
  p.original_prompt = j.at("original_prompt").get<std::string>();
  p.tuned_prompt = j.at("tuned_prompt").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.meter = j.at("meter").get<MeterRecord>();
  return p;
}

bool is_power_of_two(int v) noexcept { return v > 0 && (v & (v - 1)) == 0; }

bool TextureArtifact::is_valid() const {
  const auto& p = provenance;
  return width() == height() && is_power_of_two(width()) && format == "png" &&
         !p.request_id.empty() && !p.backend_id.empty() && !p.original_prompt.empty() &&
         !p.tuned_prompt.empty() && p.meter.request_id == p.request_id;
}

StandardizationTarget StandardizationTarget::of(int size) {
  if (size != 256 && size != 512 && size != 1024) {
    throw Error(ErrorCode::InvalidConfig,
                "standardization size must be 256, 512 or 1024, got " + std::to_string(size));
  }
  return StandardizationTarget(size);
}

CropRect center_square(int width, int height) {
  const int side = std::min(width, height);
  const int x0 = (width - side) / 2;
  const int y0 = (height - side) / 2;
  return {x0, y0, x0 + side, y0 + side};
}

Raster crop(const Raster& src, const CropRect& rect) {
  Raster out(rect.width(), rect.height());
  for (int y = 0; y < rect.height(); ++y) {
    for (int x = 0; x < rect.width(); ++x) out.at(x, y) = src.at(rect.x0 + x, rect.y0 + y);
  }
  return out;
}

Raster resize_bilinear(const Raster& src, int out_width, int out_height) {
  if (src.empty() || out_width <= 0 || out_height <= 0) {
    throw Error(ErrorCode::EmptyImage, "resize of an empty raster");
  }
  if (src.width() == out_width && src.height() == out_height) return src;

  const double sx = static_cast<double>(src.width()) / out_width;
  const double sy = static_cast<double>(src.height()) / out_height;
  const int max_x = src.width() - 1;
  const int max_y = src.height() - 1;

  struct Tap {
    int i0, i1;
    double w;
  };
  auto taps = [](int n, double scale, int max_i) {
    std::vector<Tap> out(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) {
      const double s = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(max_i));
      const int i0 = static_cast<int>(std::floor(s));
      out[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, max_i), s - i0};
    }
    return out;
  };
  const auto tx = taps(out_width, sx, max_x);
  const auto ty = taps(out_height, sy, max_y);

  Raster out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    const Tap& v = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_width; ++x) {
      const Tap& h = tx[static_cast<std::size_t>(x)];
      const Rgba& p00 = src.at(h.i0, v.i0);
      const Rgba& p10 = src.at(h.i1, v.i0);
      const Rgba& p01 = src.at(h.i0, v.i1);
      const Rgba& p11 = src.at(h.i1, v.i1);
      auto mix = [&](std::uint8_t Rgba::*c) {
        const double top = p00.*c + (p10.*c - p00.*c) * h.w;
        const double bottom = p01.*c + (p11.*c - p01.*c) * h.w;
        const double value = top + (bottom - top) * v.w;
        return static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
      };
      out.at(x, y) = {mix(&Rgba::r), mix(&Rgba::g), mix(&Rgba::b), mix(&Rgba::a)};
    }
  }
  return out;
}

Raster standardize_pixels(const Raster& raw, const StandardizationTarget& target) {
  if (raw.empty()) throw Error(ErrorCode::EmptyImage, "cannot standardize an empty image");
  const CropRect rect = center_square(raw.width(), raw.height());
  const Raster square = rect.width() == raw.width() && rect.height() == raw.height() ? raw : crop(raw, rect);
  return resize_bilinear(square, target.size(), target.size());
}

TextureArtifact standardize(const Raster& raw, const StandardizationTarget& target) {
  TextureArtifact out;
  out.pixels = standardize_pixels(raw, target);
  return out;
}

Raster composite_inpaint(const Raster& base, const Mask& mask, const Raster& patch) {
  if (mask.width() != base.width() || mask.height() != base.height() ||
      patch.width() != base.width() || patch.height() != base.height()) {
    throw Error(ErrorCode::DimensionMismatch, "base, mask and patch dimensions differ");
  }
  Raster out = base;
  const auto cells = mask.cells();
  auto dst = out.pixels();
  const auto src = patch.pixels();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i]) dst[i] = src[i];
  }
  return out;
}

std::vector<std::uint8_t> encode_artifact(const TextureArtifact& artifact, ProvenanceEmbed embed) {
  json meta = to_json(artifact.provenance);
  if (embed == ProvenanceEmbed::reproducible) {
    meta["request_id"] = "";
    auto& meter = meta["meter"];
    meter["request_id"] = "";
    meter["wall_time_ms"] = 0;
    meter["stages"] = json::array();
    meter.erase("artifact_id");
  }
  meta["format"] = artifact.format;
  return encode_png(artifact.pixels, {{kProvenanceChunkKey, meta.dump(-1, ' ', true)}});
}

TextureArtifact decode_artifact(std::span<const std::uint8_t> bytes) {
  auto decoded = decode_png(bytes);
  const auto it = decoded.text.find(kProvenanceChunkKey);
  if (it == decoded.text.end()) throw Error(ErrorCode::CorruptFile, "artifact has no tmdf chunk");
  TextureArtifact out;
  out.pixels = std::move(decoded.image);
  try {
    const json meta = json::parse(it->second);
    out.format = meta.value("format", std::string{"png"});
    out.provenance = provenance_from_json(meta);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("artifact provenance: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptFile, std::string("artifact provenance: ") + e.what());
  }
  return out;
}

}  // namespace tmd
