#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tmd/concurrency.hpp"
#include "tmd/core_model.hpp"
#include "tmd/http_client.hpp"
#include "tmd/metering.hpp"
#include "tmd/raster.hpp"

namespace tmd {

enum class BackendKind { TextToImage, ImageEdit };

std::string_view to_string(BackendKind k);
std::optional<BackendKind> parse_backend_kind(std::string_view s);

/// Library and prompt scenarios go to text-to-image; inpainting goes to image edit.
constexpr BackendKind route(ScenarioKind kind) noexcept {
  switch (kind) {
    case ScenarioKind::LibrarySelect:
    case ScenarioKind::CreativePrompt:
      return BackendKind::TextToImage;
    case ScenarioKind::ImageInpaint:
      return BackendKind::ImageEdit;
  }
  return BackendKind::TextToImage;
}

struct GenRequest {
  std::string prompt;
  std::optional<Raster> base_image;  // required iff ImageEdit
  std::optional<Mask> mask;
  int out_width = 512;
  int out_height = 512;
  std::uint64_t seed = 0;

  /// Throws Error(InvalidRequest / MissingImage / MaskMismatch / EmptyPrompt).
  void validate_for(BackendKind kind) const;

  friend bool operator==(const GenRequest&, const GenRequest&) = default;
};

struct GenOutput {
  Raster image;
  std::int64_t wall_time_ms = 0;
  std::string backend_id;
};

/// An image generation model.
class GenBackend {
 public:
  virtual ~GenBackend() = default;
  virtual GenOutput generate(const GenRequest& request) = 0;
  virtual std::string backend_id() const = 0;
};

/// Procedural stand-in for remote models; a pure function of the request.
class OfflineSynthesizer final : public GenBackend {
 public:
  explicit OfflineSynthesizer(std::string id) : id_(std::move(id)) {}
  GenOutput generate(const GenRequest& request) override;
  std::string backend_id() const override { return id_; }

 private:
  std::string id_;
};

struct RemoteImageConfig {
  std::string backend_id;
  HttpEndpoint endpoint;
  std::string path = "/v1/images";
};

/// JSON-over-HTTP image endpoint:
/// {"prompt","image_b64"?,"mask_b64"?,"width","height","seed"} -> {"image_b64","elapsed_ms"}.
class RemoteImageBackend final : public GenBackend {
 public:
  explicit RemoteImageBackend(RemoteImageConfig config) : config_(std::move(config)) {}
  GenOutput generate(const GenRequest& request) override;
  std::string backend_id() const override { return config_.backend_id; }

 private:
  RemoteImageConfig config_;
};

/// Backends bound to kinds, with per-backend in-flight caps. Read-only once
/// populated, so concurrent generate() calls only contend on the caps.
class BackendRegistry {
 public:
  /// max_in_flight == 0 means unlimited.
  void bind(BackendKind kind, std::shared_ptr<GenBackend> backend, std::size_t max_in_flight = 0);
  bool has(BackendKind kind) const;

  struct Binding {
    std::shared_ptr<GenBackend> backend;
    std::shared_ptr<InFlightLimiter> limiter;
  };
  /// Throws Error(NoBackendForKind).
  const Binding& find(BackendKind kind) const;

 private:
  std::map<BackendKind, Binding> bindings_;
};

struct GenResult {
  Raster image;
  MeterRecord meter;  // backend_id and wall_time_ms populated
};

/// Runs a request on the backend bound to `kind`. For masked edits the result is
/// recomposited over the base image so pixels outside the mask are untouched.
GenResult generate(const GenRequest& request, BackendKind kind, const BackendRegistry& registry);

/// Offline synthesizer core. Keywords in the prompt select features:
///   crack        dark random-walk polyline
///   rust, decay  low-frequency value-noise blotches in an oxide palette
///   wear, worn   directional streaking
/// over a base-material field chosen by material keywords. With a base image,
/// features are drawn over it and confined to the mask (or the whole image).
Raster synthesize_procedural(const GenRequest& request);

}  // namespace tmd
