#include "tmd/sus_eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "tmd/error.hpp"
#include "tmd/text.hpp"

namespace tmd {

std::string_view to_string(Platform p) { return p == Platform::ios ? "ios" : "android"; }
std::string_view to_string(Expertise e) { return e == Expertise::expert ? "expert" : "non_expert"; }

void SUSResponse::validate() const {
  if (scenario < 1 || scenario > 3) {
    throw Error(ErrorCode::InvalidScore, "scenario must be 1, 2 or 3");
  }
  for (std::size_t i = 0; i < item_scores.size(); ++i) {
    if (item_scores[i] < 1 || item_scores[i] > 5) {
      throw Error(ErrorCode::InvalidScore,
                  "q" + std::to_string(i + 1) + " = " + std::to_string(item_scores[i]) + " is outside 1-5");
    }
  }
}

double score_sus(const SUSResponse& r) {
  r.validate();
  int sum = 0;
  for (int item = 1; item <= 10; ++item) {
    const int s = r.item_scores[static_cast<std::size_t>(item - 1)];
    sum += is_reverse_item(item) ? 5 - s : s - 1;
  }
  return sum * 2.5;
}

double score_sus(const std::vector<int>& item_scores) {
  if (item_scores.size() != 10) {
    throw Error(ErrorCode::InvalidScore, "expected 10 item scores, got " + std::to_string(item_scores.size()));
  }
  SUSResponse r;
  std::copy(item_scores.begin(), item_scores.end(), r.item_scores.begin());
  return score_sus(r);
}

SUSReport aggregate_sus(const std::vector<SUSResponse>& responses, SusGrouping grouping) {
  using Key = std::pair<int, int>;  // (scenario or 0, platform or -1)
  struct Acc {
    std::size_t n = 0;
    double score = 0;
    std::array<long, 10> items{};
  };
  std::map<Key, Acc> groups;
  for (const auto& r : responses) {
    const double s = score_sus(r);
    Key key{grouping == SusGrouping::platform ? 0 : r.scenario,
            grouping == SusGrouping::scenario ? -1 : static_cast<int>(r.platform)};
    auto& acc = groups[key];
    ++acc.n;
    acc.score += s;
    for (std::size_t i = 0; i < 10; ++i) acc.items[i] += r.item_scores[i];
  }

  SUSReport report;
  report.grouping = grouping;
  for (const auto& [key, acc] : groups) {
    SUSReportRow row;
    if (key.first != 0) row.scenario = key.first;
    if (key.second >= 0) row.platform = static_cast<Platform>(key.second);
    row.n = acc.n;
    row.score_mean = acc.score / static_cast<double>(acc.n);
    for (std::size_t i = 0; i < 10; ++i) {
      row.question_means[i] = static_cast<double>(acc.items[i]) / static_cast<double>(acc.n);
    }
    report.rows.push_back(row);
  }
  return report;
}

namespace {

[[noreturn]] void csv_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::InvalidScore, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<SUSResponse> read_sus_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::vector<SUSResponse> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    for (auto& c : cells) c = to_lower(trim(c));
    if (header.empty()) {
      header = cells;
      const std::vector<std::string> expected{"scenario", "platform", "expertise", "q1", "q2", "q3", "q4",
                                              "q5",       "q6",       "q7",        "q8", "q9", "q10"};
      if (header != expected) csv_error(line_no, "header must be scenario,platform,expertise,q1..q10");
      continue;
    }
    if (cells.size() != 13) csv_error(line_no, "expected 13 columns, got " + std::to_string(cells.size()));
    SUSResponse r;
    try {
      r.scenario = std::stoi(cells[0]);
      for (std::size_t i = 0; i < 10; ++i) {
        std::size_t used = 0;
        r.item_scores[i] = std::stoi(cells[3 + i], &used);
        if (used != cells[3 + i].size()) csv_error(line_no, "non-integer score in q" + std::to_string(i + 1));
      }
    } catch (const std::logic_error&) {
      csv_error(line_no, "non-numeric cell");
    }
    if (cells[1] == "ios") r.platform = Platform::ios;
    else if (cells[1] == "android") r.platform = Platform::android;
    else csv_error(line_no, "platform must be ios or android");
    if (cells[2] == "expert") r.expertise = Expertise::expert;
    else if (cells[2] == "non_expert" || cells[2] == "non-expert") r.expertise = Expertise::non_expert;
    else csv_error(line_no, "expertise must be expert or non_expert");
    try {
      r.validate();
    } catch (const Error& e) {
      csv_error(line_no, e.what());
    }
    out.push_back(r);
  }
  if (header.empty()) csv_error(0, "empty input");
  return out;
}

nlohmann::json to_json(const SUSReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row{{"n", r.n}, {"score_mean", r.score_mean}, {"question_means", r.question_means}};
    if (r.scenario) row["scenario"] = *r.scenario;
    if (r.platform) row["platform"] = to_string(*r.platform);
    rows.push_back(std::move(row));
  }
  const char* by = report.grouping == SusGrouping::scenario   ? "scenario"
                   : report.grouping == SusGrouping::platform ? "platform"
                                                              : "scenario,platform";
  return {{"grouping", by}, {"rows", rows}};
}

SUSResponse sus_response_from_json(const nlohmann::json& j) {
  SUSResponse r;
  try {
    const auto& items = j.at("item_scores");
    if (!items.is_array() || items.size() != 10) {
      throw Error(ErrorCode::InvalidScore, "item_scores must hold exactly 10 integers");
    }
    for (std::size_t i = 0; i < 10; ++i) r.item_scores[i] = items[i].get<int>();
    r.scenario = j.value("scenario", 1);
    const auto platform = j.value("platform", std::string{"ios"});
    if (platform == "ios") r.platform = Platform::ios;
    else if (platform == "android") r.platform = Platform::android;
    else throw Error(ErrorCode::InvalidScore, "platform must be ios or android");
    const auto expertise = j.value("expertise", std::string{"expert"});
    r.expertise = expertise == "non_expert" ? Expertise::non_expert : Expertise::expert;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidScore, std::string("malformed response: ") + e.what());
  }
  r.validate();
  return r;
}

std::string format_table(const SUSReport& report) {
  std::ostringstream os;
  char buf[64];
  os << "scenario  platform  n     SUS    ";
  for (int i = 1; i <= 10; ++i) {
    std::snprintf(buf, sizeof buf, "%-5s", ("Q" + std::to_string(i)).c_str());
    os << buf;
  }
  os << "\n";
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-10s%-10s%-6zu%-7.1f", r.scenario ? std::to_string(*r.scenario).c_str() : "all",
                  r.platform ? std::string(to_string(*r.platform)).c_str() : "all", r.n, r.score_mean);
    os << buf;
    for (double q : r.question_means) {
      std::snprintf(buf, sizeof buf, "%-5.2f", q);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace tmd
