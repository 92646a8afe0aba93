#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "tmd/chat_client.hpp"
#include "tmd/concurrency.hpp"
#include "tmd/core_model.hpp"
#include "tmd/http_client.hpp"

namespace tmd {

struct TunedPrompt {
  std::string original;
  std::string refined_text;
  DefectSpec attributes;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  friend bool operator==(const TunedPrompt&, const TunedPrompt&) = default;
};

/// A chat-completion model that rewrites prompts.
class TunerBackend {
 public:
  virtual ~TunerBackend() = default;
  virtual Completion complete(std::string_view system_prompt, std::string_view user_prompt) = 0;
  virtual std::string backend_id() const = 0;
};

/// Deterministic slot-filling tuner driven by the defect library.
///
/// Reads the defect type, material, orientation, size and marked region from the
/// user prompt; anything missing comes from the library template of that defect
/// type. Output shape:
///   "A <orientation> <noun>, approximately <size> <extent>, located on the
///    <component>, with <color notes>."
/// Returns empty text when the prompt names no known defect.
class OfflineTemplateTuner final : public TunerBackend {
 public:
  explicit OfflineTemplateTuner(DefectLibrary library, std::string id = "offline-tuner");

  Completion complete(std::string_view system_prompt, std::string_view user_prompt) override;
  std::string backend_id() const override { return id_; }

 private:
  DefectLibrary library_;
  std::string id_;
};

struct RemoteTunerConfig {
  std::string backend_id = "remote-tuner";
  ChatEndpoint endpoint;
  std::size_t max_in_flight = 4;
};

/// Chat-completion client: {"messages":[...]} -> {"choices":[{"message":{"content"}}],"usage":{...}}.
class RemoteChatTuner final : public TunerBackend {
 public:
  explicit RemoteChatTuner(RemoteTunerConfig config);

  Completion complete(std::string_view system_prompt, std::string_view user_prompt) override;
  std::string backend_id() const override { return config_.backend_id; }

 private:
  RemoteTunerConfig config_;
  InFlightLimiter limiter_;
};

/// System prompt handed to every tuner backend.
std::string_view tuner_system_prompt();

/// Sentence appended to the user prompt when a mask marks a region.
std::string marked_region_hint(const BBox& box);

/// Normalized bounding box of the set cells, or nullopt for an empty mask.
std::optional<BBox> mask_bounds(const Mask& mask);

/// Best-effort attribute parse. Throws Error(NoDefectFound).
DefectSpec extract_attributes(std::string_view refined_text);

/// Defect type named in `text` (earliest keyword wins), if any.
std::optional<DefectType> find_defect_type(std::string_view text);

/// True when `text` names a defect type and at least two of
/// {size, location, orientation, color}.
bool meets_tuned_invariants(std::string_view text);

/// Refines a validated request into a fine-grained defect prompt.
/// One retry when the backend output fails the invariants, then Error(UntunablePrompt).
TunedPrompt tune_prompt(const ScenarioRequest& request, const DefectLibrary& library,
                        TunerBackend& backend);

}  // namespace tmd
