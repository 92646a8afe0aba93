#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "tmd/service.hpp"

namespace tmd {

using nlohmann::json;

namespace {

const std::vector<std::string>& bench_prompts() {
  static const std::vector<std::string> prompts = {
      "crack on the rail",
      "rusty fastener",
      "worn rail head",
      "decay on the wooden sleeper",
      "squat on the rail head",
      "long diagonal crack on the weld joint",
      "rust patch on the side panel of the freight wagon",
      "wear marks on the fastener clip",
      "transverse crack, 3 inch, on the sleeper",
      "small squat with a dark center on the rail",
  };
  return prompts;
}

const std::vector<std::string>& bench_instructions() {
  static const std::vector<std::string> instructions = {
      "add a crack here",
      "add rust in the marked area",
      "make this area look worn",
      "add surface decay",
      "add a squat defect",
  };
  return instructions;
}

Raster bench_base_image(int index) {
  GenRequest base;
  base.prompt = "clean steel rail head";
  base.out_width = 320;
  base.out_height = 240;
  base.seed = 1000 + static_cast<std::uint64_t>(index % 7);
  return synthesize_procedural(base);
}

/// Rectangle that walks across the image and changes size with the run index.
Mask bench_mask(int index) {
  Mask m(320, 240);
  const int w = 40 + (index * 17) % 120;
  const int h = 30 + (index * 11) % 90;
  const int x0 = (index * 37) % (320 - w);
  const int y0 = (index * 23) % (240 - h);
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) m.set(x, y, true);
  }
  return m;
}

}  // namespace

ScenarioRequest bench_request(const DefectLibrary& library, ScenarioKind scenario, int index) {
  ScenarioRequest r;
  r.seed = static_cast<std::uint64_t>(index);
  switch (scenario) {
    case ScenarioKind::LibrarySelect: {
      const std::size_t nm = library.materials.size();
      const std::size_t nd = library.defects.size();
      const std::size_t i = static_cast<std::size_t>(index) % (nm * nd);
      r.payload = LibrarySelect{library.materials[i / nd].material_id, library.defects[i % nd].defect_id};
      break;
    }
    case ScenarioKind::CreativePrompt: {
      const auto& prompts = bench_prompts();
      r.payload = CreativePrompt{prompts[static_cast<std::size_t>(index) % prompts.size()]};
      break;
    }
    case ScenarioKind::ImageInpaint: {
      const auto& instructions = bench_instructions();
      r.payload = ImageInpaint{bench_base_image(index), bench_mask(index),
                               instructions[static_cast<std::size_t>(index) % instructions.size()]};
      break;
    }
  }
  return r;
}

BenchReport bench(Pipeline& pipeline, const std::vector<ScenarioKind>& scenarios, int runs) {
  if (runs < 1) throw Error(ErrorCode::InvalidConfig, "runs must be >= 1");
  BenchReport report;
  report.meter_file = pipeline.meters().file();
  for (const ScenarioKind scenario : scenarios) {
    BenchScenarioReport s;
    s.scenario = scenario;
    s.requested = static_cast<std::size_t>(runs);
    std::vector<MeterRecord> records;
    int consecutive_failures = 0;
    for (int i = 0; i < runs; ++i) {
      try {
        auto response = pipeline.handle_generate(bench_request(pipeline.library(), scenario, i));
        records.push_back(response.meter);
        s.request_ids.push_back(response.request_id);
        consecutive_failures = 0;
      } catch (const StageError&) {
        ++s.failures;
        if (++consecutive_failures >= 3) {
          s.incomplete = true;
          break;
        }
      }
    }
    s.completed = records.size();
    if (!records.empty()) {
      s.latency = latency_report(records).at(scenario);
      s.tokens = token_report(records).at(scenario);
      s.cost = estimate_cost(records, pipeline.rates());
    }
    report.scenarios.push_back(std::move(s));
  }
  return report;
}

std::size_t BenchReport::total_completed() const {
  std::size_t n = 0;
  for (const auto& s : scenarios) n += s.completed;
  return n;
}

json BenchReport::to_json() const {
  json out = json::array();
  for (const auto& s : scenarios) {
    out.push_back({{"scenario", to_string(s.scenario)},
                   {"requested", s.requested},
                   {"completed", s.completed},
                   {"failures", s.failures},
                   {"incomplete", s.incomplete},
                   {"latency",
                    {{"n", s.latency.n},
                     {"mean_ms", s.latency.mean_ms},
                     {"min_ms", s.latency.min_ms},
                     {"max_ms", s.latency.max_ms},
                     {"p50_ms", s.latency.p50_ms},
                     {"p95_ms", s.latency.p95_ms}}},
                   {"tokens",
                    {{"n", s.tokens.n},
                     {"mean_prompt", s.tokens.mean_prompt},
                     {"mean_completion", s.tokens.mean_completion},
                     {"mean_total", s.tokens.mean_total}}},
                   {"cost", tmd::to_json(s.cost)}});
  }
  return {{"scenarios", out}, {"total_completed", total_completed()}, {"meter_file", meter_file.string()}};
}

std::string BenchReport::format_table() const {
  std::ostringstream os;
  os << std::left << std::setw(16) << "scenario" << std::right << std::setw(6) << "n" << std::setw(11)
     << "mean_ms" << std::setw(8) << "p50" << std::setw(8) << "p95" << std::setw(11) << "tokens" << std::setw(13)
     << "cost" << "\n";
  os << std::fixed;
  for (const auto& s : scenarios) {
    os << std::left << std::setw(16) << to_string(s.scenario) << std::right << std::setw(6) << s.completed
       << std::setw(11) << std::setprecision(2) << s.latency.mean_ms << std::setw(8) << s.latency.p50_ms
       << std::setw(8) << s.latency.p95_ms << std::setw(11) << std::setprecision(1) << s.tokens.mean_total
       << std::setw(13) << std::setprecision(6) << s.cost.total();
    if (s.incomplete) os << "  INCOMPLETE";
    os << "\n";
  }
  os << "total " << total_completed() << "\n";
  return os.str();
}

}  // namespace tmd
