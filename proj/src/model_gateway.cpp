#include "tmd/model_gateway.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numbers>

#include "tmd/digest.hpp"
#include "tmd/error.hpp"
#include "tmd/png_codec.hpp"
#include "tmd/text.hpp"
#include "tmd/texture_processor.hpp"

namespace tmd {

std::string_view to_string(BackendKind k) {
  return k == BackendKind::TextToImage ? "text_to_image" : "image_edit";
}

std::optional<BackendKind> parse_backend_kind(std::string_view s) {
  if (s == "text_to_image") return BackendKind::TextToImage;
  if (s == "image_edit") return BackendKind::ImageEdit;
  return std::nullopt;
}

void GenRequest::validate_for(BackendKind kind) const {
  if (trim(prompt).empty()) throw Error(ErrorCode::EmptyPrompt, "generation prompt is empty");
  if (out_width <= 0 || out_height <= 0) {
    throw Error(ErrorCode::InvalidRequest, "output dimensions must be positive");
  }
  if (kind == BackendKind::TextToImage) {
    if (base_image || mask) {
      throw Error(ErrorCode::InvalidRequest, "text-to-image requests take no base image or mask");
    }
    return;
  }
  if (!base_image || base_image->empty()) {
    throw Error(ErrorCode::MissingImage, "image edit requires a base image");
  }
  if (out_width != base_image->width() || out_height != base_image->height()) {
    throw Error(ErrorCode::InvalidRequest, "image edit output size must equal the base image size");
  }
  if (mask && (mask->width() != base_image->width() || mask->height() != base_image->height())) {
    throw Error(ErrorCode::MaskMismatch, "mask dimensions differ from base image");
  }
}

// ---- procedural synthesis ---------------------------------------------------
//
// Fixed parameters of the offline synthesizer:
//
//   material     keywords                         base RGB
//   steel rail   rail, steel, track, weld (def.)  (126, 124, 122)
//   galvanized   fastener, clip, bolt             (158, 162, 166)
//   concrete     sleeper, concrete, tie           (152, 148, 140)
//   painted      freight, wagon, panel            ( 72,  92, 118)
//
//   material field   value noise, cells 32/16/8 px (scaled by size/256), amplitude +-20
//   rust             value noise, cell 64 px, threshold 0.52, palette (156,78,32)->(104,48,22)
//   decay            value noise, cell 48 px, threshold 0.50, palette ( 74,54,38)->( 44,32,24)
//   wear             1-D streak noise across the wear direction, cell 6 px, +46 brightness
//   crack            random walk, step = max(1, size/128), heading jitter +-0.45 rad,
//                    drift limit 0.9 rad, radius = max(1, size/160), colour (16,14,13),
//                    two side branches of 1/5 the main length
//   edit blend       35% of the material field inside the edit region

namespace {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return SplitMix64(a ^ (b * 0x9E3779B97F4A7C15ULL)).next();
}

struct Features {
  bool crack = false;
  bool rust = false;
  bool decay = false;
  bool wear = false;
  Orientation orientation = Orientation::unspecified;
  Rgba base{126, 124, 122, 255};
  std::uint64_t code = 0;
};

bool any_word(std::string_view text, std::initializer_list<std::string_view> words) {
  return std::any_of(words.begin(), words.end(), [&](std::string_view w) { return contains_word(text, w); });
}

Features parse_features(std::string_view prompt) {
  Features f;
  f.crack = any_word(prompt, {"crack", "cracks", "cracked", "cracking", "fracture"});
  f.rust = any_word(prompt, {"rust", "rusty", "rusted", "corrosion", "corroded", "oxide"});
  f.decay = any_word(prompt, {"decay", "decayed", "rot", "rotten", "spalling"});
  f.wear = any_word(prompt, {"wear", "worn", "abrasion", "weathered", "squat"});
  if (contains_word(prompt, "transverse")) f.orientation = Orientation::transverse;
  else if (contains_word(prompt, "longitudinal")) f.orientation = Orientation::longitudinal;
  else if (contains_word(prompt, "diagonal")) f.orientation = Orientation::diagonal;

  int material = 0;
  if (any_word(prompt, {"fastener", "clip", "bolt"})) {
    f.base = {158, 162, 166, 255};
    material = 1;
  } else if (any_word(prompt, {"sleeper", "concrete", "tie"})) {
    f.base = {152, 148, 140, 255};
    material = 2;
  } else if (any_word(prompt, {"freight", "wagon", "panel"})) {
    f.base = {72, 92, 118, 255};
    material = 3;
  }
  f.code = (f.crack ? 1u : 0u) | (f.rust ? 2u : 0u) | (f.decay ? 4u : 0u) | (f.wear ? 8u : 0u) |
           (static_cast<std::uint64_t>(f.orientation) << 4) |
           (static_cast<std::uint64_t>(material) << 8);
  return f;
}

/// Smooth lattice value noise in [0, 1].
class ValueNoise {
 public:
  ValueNoise(std::uint64_t seed, double cell) : seed_(seed), cell_(std::max(cell, 1.0)) {}

  double at(double x, double y) const {
    const double gx = x / cell_;
    const double gy = y / cell_;
    const auto ix = static_cast<std::int64_t>(std::floor(gx));
    const auto iy = static_cast<std::int64_t>(std::floor(gy));
    const double fx = smooth(gx - static_cast<double>(ix));
    const double fy = smooth(gy - static_cast<double>(iy));
    const double v00 = lattice(ix, iy), v10 = lattice(ix + 1, iy);
    const double v01 = lattice(ix, iy + 1), v11 = lattice(ix + 1, iy + 1);
    const double top = v00 + (v10 - v00) * fx;
    const double bottom = v01 + (v11 - v01) * fx;
    return top + (bottom - top) * fy;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double lattice(std::int64_t x, std::int64_t y) const {
    const auto h = mix(mix(seed_, static_cast<std::uint64_t>(x)), static_cast<std::uint64_t>(y));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  double cell_;
};

std::uint8_t clamp_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Rgba lerp(const Rgba& a, const Rgba& b, double t) {
  return {clamp_channel(a.r + (b.r - a.r) * t), clamp_channel(a.g + (b.g - a.g) * t),
          clamp_channel(a.b + (b.b - a.b) * t), clamp_channel(a.a + (b.a - a.a) * t)};
}

Raster material_field(int w, int h, std::uint64_t seed, const Rgba& base) {
  const double scale = std::max(w, h) / 256.0;
  const std::array<ValueNoise, 3> octaves{ValueNoise(mix(seed, 1), 32 * scale),
                                          ValueNoise(mix(seed, 2), 16 * scale),
                                          ValueNoise(mix(seed, 3), 8 * scale)};
  constexpr std::array<double, 3> amps{0.5714, 0.2857, 0.1429};
  Raster out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double n = 0;
      for (std::size_t o = 0; o < octaves.size(); ++o) n += amps[o] * octaves[o].at(x, y);
      const double d = (n - 0.5) * 40.0;
      out.at(x, y) = {clamp_channel(base.r + d), clamp_channel(base.g + d), clamp_channel(base.b + d), 255};
    }
  }
  return out;
}

struct Region {
  int x0, y0, x1, y1;  // half-open
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

using EditMask = std::vector<std::uint8_t>;  // 1 where drawing is allowed

void blotches(Raster& img, const EditMask& allow, std::uint64_t seed, double cell, double threshold,
              const Rgba& light, const Rgba& dark) {
  const double scale = std::max(img.width(), img.height()) / 256.0;
  const ValueNoise shape(mix(seed, 11), cell * scale);
  const ValueNoise tone(mix(seed, 12), cell * scale / 4.0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto i = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(x);
      if (!allow[i]) continue;
      const double n = shape.at(x, y);
      if (n <= threshold) continue;
      const double strength = std::min(1.0, (n - threshold) / (1.0 - threshold) * 2.5);
      const Rgba oxide = lerp(light, dark, tone.at(x, y));
      img.at(x, y) = lerp(img.at(x, y), oxide, strength);
    }
  }
}

void streaks(Raster& img, const EditMask& allow, std::uint64_t seed, Orientation o) {
  const double scale = std::max(img.width(), img.height()) / 256.0;
  const ValueNoise line(mix(seed, 21), 6 * scale);
  const ValueNoise fade(mix(seed, 22), 48 * scale);
  const bool vertical = o == Orientation::longitudinal;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto i = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(x);
      if (!allow[i]) continue;
      const double across = vertical ? x : y;
      const double along = vertical ? y : x;
      const double s = line.at(across, 0.0);
      if (s < 0.55) continue;
      const double k = (s - 0.55) / 0.45 * (0.4 + 0.6 * fade.at(along, across));
      auto& p = img.at(x, y);
      p = {clamp_channel(p.r + 46 * k), clamp_channel(p.g + 46 * k), clamp_channel(p.b + 46 * k), p.a};
    }
  }
}

void stamp(Raster& img, const EditMask& allow, double cx, double cy, int radius, const Rgba& color) {
  const int x0 = static_cast<int>(std::floor(cx)) - radius;
  const int y0 = static_cast<int>(std::floor(cy)) - radius;
  for (int y = y0; y <= y0 + 2 * radius; ++y) {
    for (int x = x0; x <= x0 + 2 * radius; ++x) {
      if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) continue;
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy > (radius + 0.5) * (radius + 0.5)) continue;
      const auto i = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(x);
      if (allow[i]) img.at(x, y) = color;
    }
  }
}

void walk(Raster& img, const EditMask& allow, SplitMix64& rng, const Region& bounds, double x, double y,
          double heading, int max_steps, int radius, double step) {
  constexpr Rgba kCrack{16, 14, 13, 255};
  const double base_heading = heading;
  for (int i = 0; i < max_steps; ++i) {
    stamp(img, allow, x, y, radius, kCrack);
    heading += rng.uniform(-0.45, 0.45);
    heading = std::clamp(heading, base_heading - 0.9, base_heading + 0.9);
    x += step * std::cos(heading);
    y += step * std::sin(heading);
    if (x < bounds.x0 - 1 || x > bounds.x1 + 1 || y < bounds.y0 - 1 || y > bounds.y1 + 1) break;
  }
}

void crack(Raster& img, const EditMask& allow, std::uint64_t seed, const Region& bounds, Orientation o) {
  SplitMix64 rng(mix(seed, 31));
  const int size = std::max(bounds.x1 - bounds.x0, bounds.y1 - bounds.y0);
  const double step = std::max(1.0, std::max(img.width(), img.height()) / 128.0);
  const int radius = std::max(1, std::max(img.width(), img.height()) / 160);
  const double bw = bounds.x1 - bounds.x0;
  const double bh = bounds.y1 - bounds.y0;

  double x, y, heading;
  switch (o) {
    case Orientation::longitudinal:
      x = bounds.x0 + bw * rng.uniform(0.3, 0.7);
      y = bounds.y0;
      heading = std::numbers::pi / 2;
      break;
    case Orientation::diagonal:
      x = bounds.x0 + bw * rng.uniform(0.0, 0.2);
      y = bounds.y0 + bh * rng.uniform(0.0, 0.2);
      heading = std::numbers::pi / 4;
      break;
    default:
      x = bounds.x0;
      y = bounds.y0 + bh * rng.uniform(0.3, 0.7);
      heading = 0.0;
      break;
  }
  const int main_steps = static_cast<int>(4.0 * size / step) + 4;

  // Record the walk so branches can sprout from it.
  std::vector<std::pair<double, double>> path;
  {
    SplitMix64 probe = rng;
    double px = x, py = y, ph = heading;
    for (int i = 0; i < main_steps; ++i) {
      path.emplace_back(px, py);
      ph = std::clamp(ph + probe.uniform(-0.45, 0.45), heading - 0.9, heading + 0.9);
      px += step * std::cos(ph);
      py += step * std::sin(ph);
      if (px < bounds.x0 - 1 || px > bounds.x1 + 1 || py < bounds.y0 - 1 || py > bounds.y1 + 1) break;
    }
  }
  walk(img, allow, rng, bounds, x, y, heading, main_steps, radius, step);

  for (int b = 0; b < 2 && path.size() > 4; ++b) {
    const auto at = static_cast<std::size_t>(rng.uniform(0.2, 0.8) * static_cast<double>(path.size()));
    const double side = (b == 0 ? 1.0 : -1.0) * rng.uniform(0.5, 1.1);
    walk(img, allow, rng, bounds, path[at].first, path[at].second, heading + side,
         main_steps / 5, std::max(1, radius - 1), step);
  }
}

}  // namespace

Raster synthesize_procedural(const GenRequest& request) {
  const Features f = parse_features(request.prompt);
  const std::uint64_t seed = mix(request.seed, f.code);
  const int w = request.out_width;
  const int h = request.out_height;

  Raster img;
  EditMask allow(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 1);
  Region bounds{0, 0, w, h};

  if (request.base_image) {
    const Raster& base = *request.base_image;
    const Raster field = material_field(w, h, seed, f.base);
    img = base;
    if (request.mask) {
      const auto cells = request.mask->cells();
      std::copy(cells.begin(), cells.end(), allow.begin());
      int x0 = w, y0 = h, x1 = -1, y1 = -1;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (request.mask->at(x, y)) {
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
          }
        }
      }
      if (x1 < 0) return img;  // empty edit region
      bounds = {x0, y0, x1 + 1, y1 + 1};
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (allow[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]) {
          img.at(x, y) = lerp(base.at(x, y), field.at(x, y), 0.35);
        }
      }
    }
  } else {
    img = material_field(w, h, seed, f.base);
  }

  if (f.rust) blotches(img, allow, mix(seed, 101), 64, 0.52, {156, 78, 32, 255}, {104, 48, 22, 255});
  if (f.decay) blotches(img, allow, mix(seed, 102), 48, 0.50, {74, 54, 38, 255}, {44, 32, 24, 255});
  if (f.wear) streaks(img, allow, mix(seed, 103), f.orientation);
  if (f.crack) crack(img, allow, mix(seed, 104), bounds, f.orientation);
  return img;
}

GenOutput OfflineSynthesizer::generate(const GenRequest& request) {
  return {synthesize_procedural(request), 0, id_};
}

// ---- remote -----------------------------------------------------------------

GenOutput RemoteImageBackend::generate(const GenRequest& request) {
  nlohmann::json body{{"prompt", request.prompt},
                      {"width", request.out_width},
                      {"height", request.out_height},
                      {"seed", request.seed}};
  if (request.base_image) body["image_b64"] = base64_encode(encode_png(*request.base_image));
  if (request.mask) body["mask_b64"] = base64_encode(encode_png(request.mask->to_raster()));

  const auto reply = post_json(config_.endpoint, config_.path, body);
  GenOutput out;
  out.backend_id = config_.backend_id;
  try {
    const auto bytes = base64_decode(reply.at("image_b64").get<std::string>());
    out.image = decode_png(bytes).image;
    out.wall_time_ms = reply.value("elapsed_ms", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("malformed image reply: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("undecodable image reply: ") + e.what());
  }
  if (out.image.width() != request.out_width || out.image.height() != request.out_height) {
    out.image = resize_bilinear(out.image, request.out_width, request.out_height);
  }
  return out;
}

// ---- registry + dispatch ----------------------------------------------------

void BackendRegistry::bind(BackendKind kind, std::shared_ptr<GenBackend> backend, std::size_t max_in_flight) {
  bindings_[kind] = {std::move(backend), std::make_shared<InFlightLimiter>(max_in_flight)};
}

bool BackendRegistry::has(BackendKind kind) const { return bindings_.count(kind) != 0; }

const BackendRegistry::Binding& BackendRegistry::find(BackendKind kind) const {
  const auto it = bindings_.find(kind);
  if (it == bindings_.end()) {
    throw Error(ErrorCode::NoBackendForKind, "no backend bound to " + std::string(to_string(kind)));
  }
  return it->second;
}

GenResult generate(const GenRequest& request, BackendKind kind, const BackendRegistry& registry) {
  request.validate_for(kind);
  const auto& binding = registry.find(kind);

  const auto started = std::chrono::steady_clock::now();
  GenOutput out;
  {
    InFlightGuard guard(*binding.limiter);
    out = binding.backend->generate(request);
  }
  const auto elapsed = std::chrono::steady_clock::now() - started;

  if (out.image.width() != request.out_width || out.image.height() != request.out_height) {
    throw Error(ErrorCode::BackendUnavailable, "backend returned wrong image size");
  }
  if (kind == BackendKind::ImageEdit && request.mask) {
    out.image = composite_inpaint(*request.base_image, *request.mask, out.image);
  }

  GenResult result;
  result.image = std::move(out.image);
  result.meter.backend_id = out.backend_id.empty() ? binding.backend->backend_id() : out.backend_id;
  result.meter.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
  return result;
}

}  // namespace tmd
