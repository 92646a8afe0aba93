#pragma once

#include <array>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tmd {

enum class Platform { ios, android };
enum class Expertise { expert, non_expert };

std::string_view to_string(Platform p);
std::string_view to_string(Expertise e);

/// Ten 1-5 ratings. Items 6 and 7 (1-based) are negatively worded.
struct SUSResponse {
  std::array<int, 10> item_scores{};
  int scenario = 1;  // 1, 2 or 3
  Platform platform = Platform::ios;
  Expertise expertise = Expertise::expert;

  /// Throws Error(InvalidScore).
  void validate() const;
};

/// 1-based item numbers scored in reverse.
constexpr bool is_reverse_item(int item) noexcept { return item == 6 || item == 7; }

/// Positive items contribute (score - 1), items 6 and 7 contribute (5 - score);
/// the sum is scaled by 2.5 onto [0, 100].
double score_sus(const SUSResponse& r);
/// Same, from raw scores; throws InvalidScore for a count other than 10 or a value outside 1-5.
double score_sus(const std::vector<int>& item_scores);

enum class SusGrouping { scenario, platform, scenario_platform };

struct SUSReportRow {
  std::optional<int> scenario;
  std::optional<Platform> platform;
  std::size_t n = 0;
  double score_mean = 0;                   // [0, 100]
  std::array<double, 10> question_means{};  // raw 1-5, before reversal
};

struct SUSReport {
  SusGrouping grouping = SusGrouping::scenario;
  std::vector<SUSReportRow> rows;  // sorted by (scenario, platform); empty groups omitted
};

SUSReport aggregate_sus(const std::vector<SUSResponse>& responses, SusGrouping grouping);

/// CSV with header scenario,platform,expertise,q1..q10. Throws InvalidScore with the line number.
std::vector<SUSResponse> read_sus_csv(std::istream& in);

nlohmann::json to_json(const SUSReport& report);
SUSResponse sus_response_from_json(const nlohmann::json& j);
/// Aligned plain-text table.
std::string format_table(const SUSReport& report);

}  // namespace tmd
