#include "tmd/metering.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "tmd/error.hpp"

namespace tmd {

using nlohmann::json;

std::int64_t count_tokens(std::string_view text) {
  std::int64_t count = 0;
  bool in_run = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      in_run = false;
    } else if (c < 0x80 && std::ispunct(c)) {
      ++count;
      in_run = false;
    } else if (!in_run) {
      ++count;
      in_run = true;
    }
  }
  return count;
}

void to_json(json& j, const MeterRecord& r) {
  json stages = json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"stage", s.stage}, {"start_us", s.start_us}, {"end_us", s.end_us}});
  }
  j = json{{"request_id", r.request_id},
           {"scenario", to_string(r.scenario)},
           {"backend_id", r.backend_id},
           {"prompt_tokens", r.prompt_tokens},
           {"completion_tokens", r.completion_tokens},
           {"wall_time_ms", r.wall_time_ms},
           {"stages", stages}};
  if (!r.artifact_id.empty()) j["artifact_id"] = r.artifact_id;
}

void from_json(const json& j, MeterRecord& r) {
  r.request_id = j.at("request_id").get<std::string>();
  const auto kind = parse_scenario_kind(j.at("scenario").get<std::string>());
  if (!kind) throw Error(ErrorCode::SchemaViolation, "unknown scenario in meter record");
  r.scenario = *kind;
  r.backend_id = j.at("backend_id").get<std::string>();
  r.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
  r.completion_tokens = j.at("completion_tokens").get<std::int64_t>();
  r.wall_time_ms = j.at("wall_time_ms").get<std::int64_t>();
  if (r.prompt_tokens < 0 || r.completion_tokens < 0 || r.wall_time_ms < 0) {
    throw Error(ErrorCode::SchemaViolation, "negative meter counter");
  }
  r.stages.clear();
  for (const auto& s : j.value("stages", json::array())) {
    r.stages.push_back({s.at("stage").get<std::string>(), s.at("start_us").get<std::int64_t>(),
                        s.at("end_us").get<std::int64_t>()});
  }
  r.artifact_id = j.value("artifact_id", std::string{});
}

// ---- cost -----------------------------------------------------------------

std::int64_t to_nano(double currency) { return std::llround(currency * 1e9); }

RateCard RateCard::from_json(const json& j) {
  RateCard card;
  for (const auto& [backend, entry] : j.items()) {
    Rate r{to_nano(entry.value("token_rate", 0.0)), to_nano(entry.value("second_rate", 0.0))};
    if (r.token_rate_nano < 0 || r.second_rate_nano < 0) {
      throw Error(ErrorCode::ConfigInvalid, "negative rate for " + backend);
    }
    card.rates.emplace(backend, r);
  }
  return card;
}

RateCard RateCard::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open rate card " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("rate card: ") + e.what());
  }
}

json RateCard::to_json() const {
  json j = json::object();
  for (const auto& [id, r] : rates) {
    j[id] = {{"token_rate", static_cast<double>(r.token_rate_nano) / 1e9},
             {"second_rate", static_cast<double>(r.second_rate_nano) / 1e9}};
  }
  return j;
}

std::int64_t CostBreakdown::to_micro(std::int64_t pico) {
  constexpr std::int64_t kDiv = 1'000'000;
  std::int64_t q = pico / kDiv;
  std::int64_t rem = pico % kDiv;
  if (rem < 0) {
    rem += kDiv;
    --q;
  }
  if (rem * 2 > kDiv || (rem * 2 == kDiv && (q % 2 != 0))) ++q;
  return q;
}

CostBreakdown& CostBreakdown::operator+=(const CostBreakdown& o) {
  token_cost_pico += o.token_cost_pico;
  time_cost_pico += o.time_cost_pico;
  total_pico += o.total_pico;
  record_count += o.record_count;
  return *this;
}

json to_json(const CostBreakdown& c) {
  return json{{"token_cost", c.token_cost()},
              {"time_cost", c.time_cost()},
              {"total", c.total()},
              {"token_cost_micro", CostBreakdown::to_micro(c.token_cost_pico)},
              {"time_cost_micro", CostBreakdown::to_micro(c.time_cost_pico)},
              {"total_micro", CostBreakdown::to_micro(c.total_pico)},
              {"n", c.record_count}};
}

CostBreakdown estimate_cost(const std::vector<MeterRecord>& records, const RateCard& rates) {
  CostBreakdown out;
  for (const auto& r : records) {
    const auto it = rates.rates.find(r.backend_id);
    if (it == rates.rates.end()) {
      throw Error(ErrorCode::UnknownBackendRate, "no rate for backend " + r.backend_id);
    }
    // tokens x nano/token -> nano; x1000 -> pico
    out.token_cost_pico += r.total_tokens() * it->second.token_rate_nano * 1000;
    // ms x nano/s -> pico
    out.time_cost_pico += r.wall_time_ms * it->second.second_rate_nano;
    ++out.record_count;
  }
  out.total_pico = out.token_cost_pico + out.time_cost_pico;
  return out;
}

// ---- latency --------------------------------------------------------------

namespace {

std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, double pct) {
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

}  // namespace

LatencyReport latency_report(const std::vector<MeterRecord>& records) {
  std::map<ScenarioKind, std::vector<std::int64_t>> groups;
  for (const auto& r : records) groups[r.scenario].push_back(r.wall_time_ms);

  LatencyReport report;
  for (auto& [kind, times] : groups) {
    std::sort(times.begin(), times.end());
    LatencyStats s;
    s.n = times.size();
    long double sum = 0;
    for (auto t : times) sum += t;
    s.mean_ms = static_cast<double>(sum / static_cast<long double>(s.n));
    s.min_ms = times.front();
    s.max_ms = times.back();
    s.p50_ms = nearest_rank(times, 50);
    s.p95_ms = nearest_rank(times, 95);
    report.emplace(kind, s);
  }
  return report;
}

json to_json(const LatencyReport& report) {
  json j = json::object();
  for (const auto& [kind, s] : report) {
    j[std::string(to_string(kind))] = {{"n", s.n},           {"mean_ms", s.mean_ms},
                                       {"min_ms", s.min_ms}, {"max_ms", s.max_ms},
                                       {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms}};
  }
  return j;
}

std::map<ScenarioKind, TokenStats> token_report(const std::vector<MeterRecord>& records) {
  std::map<ScenarioKind, std::vector<const MeterRecord*>> groups;
  for (const auto& r : records) groups[r.scenario].push_back(&r);
  std::map<ScenarioKind, TokenStats> out;
  for (const auto& [kind, rs] : groups) {
    TokenStats s;
    s.n = rs.size();
    s.min_total = rs.front()->total_tokens();
    s.max_total = s.min_total;
    double p = 0, c = 0;
    for (const auto* r : rs) {
      p += static_cast<double>(r->prompt_tokens);
      c += static_cast<double>(r->completion_tokens);
      s.min_total = std::min(s.min_total, r->total_tokens());
      s.max_total = std::max(s.max_total, r->total_tokens());
    }
    s.mean_prompt = p / static_cast<double>(s.n);
    s.mean_completion = c / static_cast<double>(s.n);
    s.mean_total = s.mean_prompt + s.mean_completion;
    out.emplace(kind, s);
  }
  return out;
}

// ---- persistence ----------------------------------------------------------

MeterStore::MeterStore(std::filesystem::path file) : file_(std::move(file)) {
  if (!file_.empty() && std::filesystem::exists(file_)) records_ = load(file_);
}

void MeterStore::append(const MeterRecord& record) {
  std::lock_guard lock(mu_);
  if (!file_.empty()) {
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot append to " + file_.string());
    out << json(record).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::IoFailure, "write failed on " + file_.string());
  }
  records_.push_back(record);
}

std::vector<MeterRecord> MeterStore::snapshot() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::vector<MeterRecord> MeterStore::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open meter file " + file.string());
  std::vector<MeterRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<MeterRecord>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaViolation,
                  "meter file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tmd
