#include "tmd/prompt_tuner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <regex>
#include <sstream>

#include "tmd/error.hpp"
#include "tmd/metering.hpp"
#include "tmd/text.hpp"

namespace tmd {

namespace {

struct Keyword {
  std::string_view word;
  DefectType type;
};

constexpr std::array<Keyword, 21> kDefectKeywords{{
    {"crack", DefectType::crack},      {"cracks", DefectType::crack},
    {"cracked", DefectType::crack},    {"cracking", DefectType::crack},
    {"fracture", DefectType::crack},   {"rust", DefectType::rust},
    {"rusty", DefectType::rust},       {"rusted", DefectType::rust},
    {"corrosion", DefectType::rust},   {"corroded", DefectType::rust},
    {"wear", DefectType::wear},        {"worn", DefectType::wear},
    {"abrasion", DefectType::wear},    {"decay", DefectType::decay},
    {"decayed", DefectType::decay},    {"rot", DefectType::decay},
    {"rotten", DefectType::decay},     {"spalling", DefectType::decay},
    {"squat", DefectType::squat},      {"squats", DefectType::squat},
    {"weathered", DefectType::wear},
}};

constexpr std::array<std::pair<std::string_view, Orientation>, 3> kOrientationWords{{
    {"transverse", Orientation::transverse},
    {"longitudinal", Orientation::longitudinal},
    {"diagonal", Orientation::diagonal},
}};

const std::regex& size_pattern() {
  static const std::regex re(
      R"((\d+(?:\.\d+)?)\s*(inches|inch|mm|millimet(?:er|re)s?|cm|centimet(?:er|re)s?)\b)",
      std::regex::icase);
  return re;
}

const std::regex& location_pattern() {
  static const std::regex re(R"(located (?:on|in|at) the (?:([a-z-]+) region of the )?([^,.;]+))",
                             std::regex::icase);
  return re;
}

const std::regex& color_pattern() {
  static const std::regex re(R"(\bwith ([^.;]+))", std::regex::icase);
  return re;
}

const std::regex& region_hint_pattern() {
  static const std::regex re(R"(Marked region: ([a-z-]+))", std::regex::icase);
  return re;
}

std::optional<DefectSize> find_size(std::string_view text) {
  const std::string s(text);
  std::smatch sm;
  if (!std::regex_search(s, sm, size_pattern())) return std::nullopt;
  double value = std::stod(sm[1].str());
  const std::string unit = to_lower(sm[2].str());
  if (unit.rfind("inch", 0) == 0) return DefectSize{value, SizeUnit::inch};
  if (unit == "cm" || unit.rfind("centimet", 0) == 0) value *= 10.0;
  if (!(value > 0)) return std::nullopt;
  return DefectSize{value, SizeUnit::mm};
}

Orientation find_orientation(std::string_view text) {
  std::size_t best = std::string_view::npos;
  Orientation out = Orientation::unspecified;
  for (const auto& [word, o] : kOrientationWords) {
    const auto pos = find_word(text, word);
    if (pos < best) {
      best = pos;
      out = o;
    }
  }
  return out;
}

const Material* find_material(const DefectLibrary& lib, std::string_view text) {
  const Material* best = nullptr;
  std::size_t best_pos = std::string_view::npos;
  for (const auto& m : lib.materials) {
    for (const auto& kw : m.keywords) {
      const auto pos = find_word(text, kw);
      if (pos < best_pos) {
        best_pos = pos;
        best = &m;
      }
    }
  }
  return best;
}

std::string format_number(double v) {
  if (std::fabs(v - std::round(v)) < 1e-9) return std::to_string(static_cast<long long>(std::llround(v)));
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::string format_size(const DefectSize& s) {
  const std::string n = format_number(s.value);
  if (s.unit == SizeUnit::mm) return n + " mm";
  return n + (s.value == 1.0 ? " inch" : " inches");
}

std::string first_sentence_case(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

std::string_view tuner_system_prompt() {
  return "You refine railway defect texture requests. Rewrite the user's request as one "
         "sentence naming the defect type, its approximate size, orientation, location on the "
         "component, and any color or surface notes.";
}

std::string marked_region_hint(const BBox& box) {
  return "Marked region: " + region_name(box) + ".";
}

std::optional<BBox> mask_bounds(const Mask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) return std::nullopt;
  const double w = mask.width();
  const double h = mask.height();
  return BBox{x0 / w, y0 / h, (x1 + 1) / w, (y1 + 1) / h};
}

std::optional<DefectType> find_defect_type(std::string_view text) {
  std::size_t best = std::string_view::npos;
  std::optional<DefectType> out;
  for (const auto& kw : kDefectKeywords) {
    const auto pos = find_word(text, kw.word);
    if (pos < best) {
      best = pos;
      out = kw.type;
    }
  }
  return out;
}

DefectSpec extract_attributes(std::string_view refined_text) {
  const auto type = find_defect_type(refined_text);
  if (!type) throw Error(ErrorCode::NoDefectFound, "no defect keyword in \"" + std::string(refined_text) + "\"");
  DefectSpec spec;
  spec.defect_type = *type;
  spec.size = find_size(refined_text);
  spec.orientation = find_orientation(refined_text);

  const std::string text(refined_text);
  std::smatch m;
  if (std::regex_search(text, m, location_pattern())) {
    if (m[1].matched) spec.location = region_box(to_lower(m[1].str()));
    spec.component = trim(m[2].str());
  }
  if (std::regex_search(text, m, color_pattern())) {
    const auto notes = trim(m[1].str());
    if (!notes.empty()) spec.color_notes = notes;
  }
  return spec;
}

bool meets_tuned_invariants(std::string_view text) {
  if (trim(text).empty()) return false;
  DefectSpec spec;
  try {
    spec = extract_attributes(text);
  } catch (const Error&) {
    return false;
  }
  int traits = 0;
  traits += spec.size.has_value();
  traits += spec.location.has_value() || !spec.component.empty();
  traits += spec.orientation != Orientation::unspecified;
  traits += spec.color_notes.has_value();
  return traits >= 2;
}

// ---- offline tuner ----------------------------------------------------------

OfflineTemplateTuner::OfflineTemplateTuner(DefectLibrary library, std::string id)
    : library_(std::move(library)), id_(std::move(id)) {}

Completion OfflineTemplateTuner::complete(std::string_view system_prompt,
                                          std::string_view user_prompt) {
  Completion out;
  out.prompt_tokens = count_tokens(system_prompt) + count_tokens(user_prompt);

  const auto type = find_defect_type(user_prompt);
  const DefectEntry* entry = type ? library_.find_defect_type(*type) : nullptr;
  if (!entry) return out;

  const Material* material = find_material(library_, user_prompt);
  const std::string component = material ? material->component_phrase : entry->spec.component;

  const Orientation user_orientation = find_orientation(user_prompt);
  const Orientation orientation =
      user_orientation != Orientation::unspecified ? user_orientation : entry->spec.orientation;
  const std::optional<DefectSize> size = find_size(user_prompt).has_value()
                                             ? find_size(user_prompt)
                                             : entry->spec.size;

  std::string region;
  std::smatch m;
  const std::string user(user_prompt);
  if (std::regex_search(user, m, region_hint_pattern()) && region_box(to_lower(m[1].str()))) {
    region = to_lower(m[1].str());
  }

  std::string sentence = "A ";
  if (orientation != Orientation::unspecified) {
    sentence += std::string(to_string(orientation)) + " ";
  }
  sentence += entry->noun;
  if (size) {
    sentence += ", approximately " + format_size(*size);
    if (!entry->extent.empty()) sentence += " " + entry->extent;
  }
  if (!region.empty()) {
    sentence += ", located in the " + region + " region of the " + component;
  } else {
    sentence += ", located on the " + component;
  }
  if (entry->spec.color_notes) sentence += ", with " + *entry->spec.color_notes;
  sentence += ".";

  out.text = first_sentence_case(sentence);
  out.completion_tokens = count_tokens(out.text);
  return out;
}

// ---- remote tuner -----------------------------------------------------------

RemoteChatTuner::RemoteChatTuner(RemoteTunerConfig config)
    : config_(std::move(config)), limiter_(config_.max_in_flight) {}

Completion RemoteChatTuner::complete(std::string_view system_prompt, std::string_view user_prompt) {
  InFlightGuard guard(limiter_);
  return chat_complete(config_.endpoint, system_prompt, std::string(user_prompt));
}

// ---- tune -------------------------------------------------------------------

TunedPrompt tune_prompt(const ScenarioRequest& request, const DefectLibrary& library,
                        TunerBackend& backend) {
  TunedPrompt out;
  std::string user_prompt;
  std::optional<DefectSpec> defaults;
  std::optional<BBox> marked;

  if (const auto* lib = std::get_if<LibrarySelect>(&request.payload)) {
    const auto found = lookup_defect(library, lib->material_id, lib->defect_id);
    out.original = render_fragment(found.prompt_fragment, found.material.component_phrase);
    user_prompt = out.original;
    defaults = found.spec;
  } else if (const auto* prompt = std::get_if<CreativePrompt>(&request.payload)) {
    out.original = prompt->text;
    user_prompt = out.original;
  } else {
    const auto& inpaint = std::get<ImageInpaint>(request.payload);
    out.original = inpaint.instruction;
    user_prompt = out.original;
    if (inpaint.mask) marked = mask_bounds(*inpaint.mask);
    if (marked) user_prompt += "\n" + marked_region_hint(*marked);
  }

  Completion completion;
  bool ok = false;
  for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
    completion = backend.complete(tuner_system_prompt(), user_prompt);
    out.prompt_tokens += completion.prompt_tokens;
    out.completion_tokens += completion.completion_tokens;
    ok = meets_tuned_invariants(completion.text);
  }
  if (!ok) {
    throw Error(ErrorCode::UntunablePrompt,
                "tuner output lacks defect attributes for \"" + out.original + "\"");
  }
  out.refined_text = trim(completion.text);

  DefectSpec spec = extract_attributes(out.refined_text);
  if (!defaults) {
    if (const auto* entry = library.find_defect_type(spec.defect_type)) defaults = entry->spec;
  }
  if (defaults) {
    if (spec.component.empty()) spec.component = defaults->component;
    if (!spec.size) spec.size = defaults->size;
    if (spec.orientation == Orientation::unspecified) spec.orientation = defaults->orientation;
    if (!spec.color_notes) spec.color_notes = defaults->color_notes;
  }
  if (marked) spec.location = marked;
  spec.validate();
  out.attributes = std::move(spec);
  return out;
}

}  // namespace tmd
