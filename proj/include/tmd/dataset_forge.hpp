#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tmd/chat_client.hpp"

namespace tmd {

/// Content-addressed image identity: SHA-256 of the file bytes plus where it was read from.
struct ImageRef {
  std::string sha256;
  std::string path;

  static ImageRef of_bytes(std::span<const std::uint8_t> bytes, std::string path);
  /// "sha256:<hex>"
  std::string key() const { return "sha256:" + sha256; }

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct TextureCaption {
  ImageRef image_ref;
  std::string text;
  friend bool operator==(const TextureCaption&, const TextureCaption&) = default;
};

struct InstructionSample {
  std::string id;
  std::string system_message;
  std::string user_instruction;
  ImageRef image_ref;
  std::string response_text;

  bool is_valid() const;
  friend bool operator==(const InstructionSample&, const InstructionSample&) = default;
};

struct ForgeConfig {
  int k = 10;                    // unique samples per caption
  int max_attempts_factor = 10;  // backend call cap = factor x k
  std::string caption_template_id = "defect-texture/1";
  std::uint64_t seed = 0;

  /// Throws Error(InvalidConfig) unless k >= 1 and max_attempts_factor >= 2.
  void validate() const;
  friend bool operator==(const ForgeConfig&, const ForgeConfig&) = default;
};

struct TextureDataset {
  std::vector<InstructionSample> entries;
  ForgeConfig forge_config;
  std::string created_at;  // ISO-8601 UTC

  friend bool operator==(const TextureDataset&, const TextureDataset&) = default;
};

/// Prompt bundle: what the captioner is asked, and how samples are framed.
struct ForgeTemplate {
  std::string caption_prompt;
  std::string system_message;    // "{defect}" is replaced by the caption's defect type
  std::string user_instruction;  // same placeholder
};

/// Throws Error(UnknownTemplate).
const ForgeTemplate& forge_template(std::string_view template_id);
std::vector<std::string> forge_template_ids();

// ---- backends -------------------------------------------------------------

class CaptionBackend {
 public:
  virtual ~CaptionBackend() = default;
  virtual std::string caption(std::string_view prompt, std::span<const std::uint8_t> image_bytes,
                              const ImageRef& ref) = 0;
};

/// Canned captions keyed by image SHA-256. Unknown images raise BackendUnavailable.
class OfflineCaptionTable final : public CaptionBackend {
 public:
  explicit OfflineCaptionTable(std::map<std::string, std::string> by_sha256)
      : table_(std::move(by_sha256)) {}
  static OfflineCaptionTable load(const std::filesystem::path& json_file);

  std::string caption(std::string_view prompt, std::span<const std::uint8_t> image_bytes,
                      const ImageRef& ref) override;

 private:
  std::map<std::string, std::string> table_;
};

/// Vision chat completion; the image travels as a base64 PNG data URL.
class RemoteCaptioner final : public CaptionBackend {
 public:
  explicit RemoteCaptioner(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string caption(std::string_view prompt, std::span<const std::uint8_t> image_bytes,
                      const ImageRef& ref) override;

 private:
  ChatEndpoint endpoint_;
};

/// Produces one candidate rephrasing per call. `attempt` counts calls for this
/// caption from 0.
class RephraseBackend {
 public:
  virtual ~RephraseBackend() = default;
  virtual std::string rephrase(const TextureCaption& caption, int attempt, std::uint64_t seed) = 0;
};

/// Deterministic rephraser: 8 phrasing frames, cycled first, then combined with
/// lighting qualifiers, giving 8 x 6 = 48 distinct outputs per caption.
/// Call `attempt` with seed s uses index (attempt + s) mod 48.
class OfflineRephraser final : public RephraseBackend {
 public:
  std::string rephrase(const TextureCaption& caption, int attempt, std::uint64_t seed) override;
  static constexpr int kFrames = 8;
  static constexpr int kQualifiers = 6;
};

class RemoteRephraser final : public RephraseBackend {
 public:
  explicit RemoteRephraser(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string rephrase(const TextureCaption& caption, int attempt, std::uint64_t seed) override;

 private:
  ChatEndpoint endpoint_;
};

// ---- operations -------------------------------------------------------------

/// Throws EmptyInput (no bytes), UnknownTemplate, EmptyCaption or BackendUnavailable.
TextureCaption caption_image(std::span<const std::uint8_t> image_bytes, std::string path,
                             std::string_view template_id, CaptionBackend& backend);

/// Uniqueness key: NFC normalization plus trailing-whitespace trim.
std::string normalize_description(std::string_view text);

/// Exactly k distinct non-empty descriptions, in acceptance order. At most
/// max_attempts_factor x k backend calls; otherwise Error(ExhaustedAttempts).
std::vector<std::string> rephrase_caption(const TextureCaption& caption, const ForgeConfig& config,
                                          RephraseBackend& backend);

/// Deterministic id: "tmd-" + first 24 hex of SHA-256(image sha256 "\n" response).
std::string sample_id(const ImageRef& ref, std::string_view response_text);

InstructionSample attach_system_message(const TextureCaption& caption, std::string_view response_text,
                                        std::string_view template_id);

/// Sorted by (image key, response_text). Throws DuplicateEntry, CountMismatch,
/// SchemaViolation (an invalid sample) or InvalidConfig.
TextureDataset assemble_dataset(std::vector<InstructionSample> samples, const ForgeConfig& config,
                                std::string created_at);

/// JSON Lines: line 0 header, then one sample per line, LF endings.
void export_dataset(const TextureDataset& dataset, const std::filesystem::path& path);
std::string dataset_to_jsonl(const TextureDataset& dataset);
/// Throws IoFailure or SchemaViolation (message names the 0-based line).
TextureDataset import_dataset(const std::filesystem::path& path);
TextureDataset dataset_from_jsonl(std::string_view text);

/// Full pipeline over image files: caption, rephrase K times, frame, assemble.
/// Files with identical content are captioned once. Captions run concurrently.
TextureDataset forge_dataset(const std::vector<std::filesystem::path>& images, const ForgeConfig& config,
                             CaptionBackend& captioner, RephraseBackend& rephraser,
                             std::string created_at);

/// Image files (png/jpg/jpeg) directly inside `dir`, sorted by path.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Current UTC time as ISO-8601, or SOURCE_DATE_EPOCH when that is set.
std::string dataset_timestamp();

inline constexpr const char* kDatasetSchema = "tmd-dataset/1";

}  // namespace tmd
