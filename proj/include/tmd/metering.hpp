#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tmd/core_model.hpp"

namespace tmd {

/// Counts tokens with the documented offline splitter:
///   1. split on ASCII whitespace;
///   2. within a chunk, every ASCII punctuation character is one token and every
///      maximal run of other bytes is one token.
/// "A transverse crack, approximately" -> A | transverse | crack | , | approximately
std::int64_t count_tokens(std::string_view text);

struct StageTiming {
  std::string stage;
  std::int64_t start_us = 0;  // relative to request start
  std::int64_t end_us = 0;
  friend bool operator==(const StageTiming&, const StageTiming&) = default;
};

struct MeterRecord {
  std::string request_id;
  ScenarioKind scenario = ScenarioKind::CreativePrompt;
  std::string backend_id;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t wall_time_ms = 0;
  std::vector<StageTiming> stages;
  std::string artifact_id;

  std::int64_t total_tokens() const noexcept { return prompt_tokens + completion_tokens; }
  friend bool operator==(const MeterRecord&, const MeterRecord&) = default;
};

void to_json(nlohmann::json& j, const MeterRecord& r);
void from_json(const nlohmann::json& j, MeterRecord& r);

// ---- cost -----------------------------------------------------------------

/// Rates are held in nano-currency units (1e-9); costs in pico-currency (1e-12),
/// which keeps every product and sum exact.
struct Rate {
  std::int64_t token_rate_nano = 0;   // per token
  std::int64_t second_rate_nano = 0;  // per second of processing time
};

struct RateCard {
  std::map<std::string, Rate, std::less<>> rates;

  static RateCard from_json(const nlohmann::json& j);
  static RateCard load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Rounds a decimal currency amount to whole nano units.
std::int64_t to_nano(double currency);

struct CostBreakdown {
  std::int64_t token_cost_pico = 0;
  std::int64_t time_cost_pico = 0;
  std::int64_t total_pico = 0;
  std::size_t record_count = 0;

  /// Display conversion, round-half-even to micro-currency.
  static std::int64_t to_micro(std::int64_t pico);
  double token_cost() const { return static_cast<double>(to_micro(token_cost_pico)) / 1e6; }
  double time_cost() const { return static_cast<double>(to_micro(time_cost_pico)) / 1e6; }
  double total() const { return static_cast<double>(to_micro(total_pico)) / 1e6; }

  CostBreakdown& operator+=(const CostBreakdown& o);
  friend CostBreakdown operator+(CostBreakdown a, const CostBreakdown& b) { return a += b; }
  friend bool operator==(const CostBreakdown&, const CostBreakdown&) = default;
};

nlohmann::json to_json(const CostBreakdown& c);

/// C = sum (tokens x token rate) + sum (seconds x second rate), one term pair per record.
/// Throws UnknownBackendRate when a record's backend_id has no rate.
CostBreakdown estimate_cost(const std::vector<MeterRecord>& records, const RateCard& rates);

// ---- latency --------------------------------------------------------------

struct LatencyStats {
  std::size_t n = 0;
  double mean_ms = 0;
  std::int64_t min_ms = 0;
  std::int64_t max_ms = 0;
  std::int64_t p50_ms = 0;  // nearest-rank percentiles
  std::int64_t p95_ms = 0;
};

using LatencyReport = std::map<ScenarioKind, LatencyStats>;

LatencyReport latency_report(const std::vector<MeterRecord>& records);
nlohmann::json to_json(const LatencyReport& report);

struct TokenStats {
  std::size_t n = 0;
  double mean_prompt = 0;
  double mean_completion = 0;
  double mean_total = 0;
  std::int64_t min_total = 0;
  std::int64_t max_total = 0;
};

std::map<ScenarioKind, TokenStats> token_report(const std::vector<MeterRecord>& records);

// ---- persistence ----------------------------------------------------------

/// Append-only meter log. Each append writes one JSON line; snapshot() returns
/// a consistent copy of everything appended so far.
class MeterStore {
 public:
  MeterStore() = default;
  explicit MeterStore(std::filesystem::path file);

  void append(const MeterRecord& record);
  std::vector<MeterRecord> snapshot() const;
  const std::filesystem::path& file() const noexcept { return file_; }

  static std::vector<MeterRecord> load(const std::filesystem::path& file);

 private:
  mutable std::mutex mu_;
  std::filesystem::path file_;
  std::vector<MeterRecord> records_;
};

}  // namespace tmd
