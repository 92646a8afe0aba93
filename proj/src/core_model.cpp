#include "tmd/core_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include "tmd/error.hpp"
#include "tmd/text.hpp"

namespace tmd {

using nlohmann::json;

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::MaskMismatch: return "MaskMismatch";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::InvalidDefectSpec: return "InvalidDefectSpec";
    case ErrorCode::UnknownMaterial: return "UnknownMaterial";
    case ErrorCode::UnknownDefect: return "UnknownDefect";
    case ErrorCode::InvalidLibrary: return "InvalidLibrary";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyCaption: return "EmptyCaption";
    case ErrorCode::UnknownTemplate: return "UnknownTemplate";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ExhaustedAttempts: return "ExhaustedAttempts";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UntunablePrompt: return "UntunablePrompt";
    case ErrorCode::NoDefectFound: return "NoDefectFound";
    case ErrorCode::NoBackendForKind: return "NoBackendForKind";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::EmptyImage: return "EmptyImage";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::UnknownBackendRate: return "UnknownBackendRate";
    case ErrorCode::InvalidScore: return "InvalidScore";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::AddressInUse: return "AddressInUse";
    case ErrorCode::DuplicateRequestId: return "DuplicateRequestId";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

namespace {

template <typename E, std::size_t N>
std::optional<E> parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

constexpr std::array<std::pair<std::string_view, DefectType>, 6> kDefectTypes{{
    {"crack", DefectType::crack},
    {"rust", DefectType::rust},
    {"wear", DefectType::wear},
    {"decay", DefectType::decay},
    {"squat", DefectType::squat},
    {"custom", DefectType::custom},
}};

constexpr std::array<std::pair<std::string_view, SizeUnit>, 2> kUnits{{
    {"inch", SizeUnit::inch},
    {"mm", SizeUnit::mm},
}};

constexpr std::array<std::pair<std::string_view, Orientation>, 4> kOrientations{{
    {"transverse", Orientation::transverse},
    {"longitudinal", Orientation::longitudinal},
    {"diagonal", Orientation::diagonal},
    {"unspecified", Orientation::unspecified},
}};

constexpr std::array<std::pair<std::string_view, ScenarioKind>, 3> kScenarioKinds{{
    {"library", ScenarioKind::LibrarySelect},
    {"prompt", ScenarioKind::CreativePrompt},
    {"inpaint", ScenarioKind::ImageInpaint},
}};

template <typename E, std::size_t N>
std::string_view enum_name(E value, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::array<const char*, 3> kRowNames{"top", "center", "bottom"};
constexpr std::array<const char*, 3> kColNames{"left", "center", "right"};

int grid_cell(double c) { return std::clamp(static_cast<int>(std::floor(c * 3.0)), 0, 2); }

std::string cell_name(int row, int col) {
  if (row == 1 && col == 1) return "center";
  return std::string(kRowNames[static_cast<std::size_t>(row)]) + "-" +
         kColNames[static_cast<std::size_t>(col)];
}

}  // namespace

std::string_view to_string(DefectType t) { return enum_name(t, kDefectTypes); }
std::string_view to_string(SizeUnit u) { return enum_name(u, kUnits); }
std::string_view to_string(Orientation o) { return enum_name(o, kOrientations); }
std::string_view to_string(ScenarioKind k) { return enum_name(k, kScenarioKinds); }
std::optional<DefectType> parse_defect_type(std::string_view s) { return parse_enum(s, kDefectTypes); }
std::optional<SizeUnit> parse_size_unit(std::string_view s) { return parse_enum(s, kUnits); }
std::optional<Orientation> parse_orientation(std::string_view s) { return parse_enum(s, kOrientations); }
std::optional<ScenarioKind> parse_scenario_kind(std::string_view s) { return parse_enum(s, kScenarioKinds); }

int scenario_number(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::LibrarySelect: return 1;
    case ScenarioKind::CreativePrompt: return 2;
    case ScenarioKind::ImageInpaint: return 3;
  }
  return 0;
}

std::string region_name(const BBox& box) {
  return cell_name(grid_cell((box.y0 + box.y1) / 2.0), grid_cell((box.x0 + box.x1) / 2.0));
}

const std::vector<std::string>& region_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.push_back(cell_name(r, c));
    return out;
  }();
  return names;
}

std::optional<BBox> region_box(std::string_view name) {
  const auto& names = region_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) {
      const double r = static_cast<double>(i / 3);
      const double c = static_cast<double>(i % 3);
      return BBox{c / 3.0, r / 3.0, (c + 1) / 3.0, (r + 1) / 3.0};
    }
  }
  return std::nullopt;
}

void DefectSpec::validate() const {
  if (location) {
    const auto& b = *location;
    const bool ok = 0.0 <= b.x0 && b.x0 < b.x1 && b.x1 <= 1.0 && 0.0 <= b.y0 && b.y0 < b.y1 &&
                    b.y1 <= 1.0;
    if (!ok) throw Error(ErrorCode::InvalidDefectSpec, "location box outside [0,1] or inverted");
  }
  if (size && !(size->value > 0.0)) {
    throw Error(ErrorCode::InvalidDefectSpec, "size_value must be positive");
  }
  if (defect_type == DefectType::custom && trim(custom_text).empty()) {
    throw Error(ErrorCode::InvalidDefectSpec, "custom defect requires text");
  }
}

ScenarioKind ScenarioRequest::kind() const noexcept {
  switch (payload.index()) {
    case 0: return ScenarioKind::LibrarySelect;
    case 1: return ScenarioKind::CreativePrompt;
    default: return ScenarioKind::ImageInpaint;
  }
}

ScenarioRequest validate_request(const ScenarioRequest& raw) {
  if (raw.request_id.empty()) throw Error(ErrorCode::InvalidRequest, "request_id is empty");
  if (const auto* lib = std::get_if<LibrarySelect>(&raw.payload)) {
    if (lib->material_id.empty() || lib->defect_id.empty()) {
      throw Error(ErrorCode::InvalidRequest, "material_id and defect_id are required");
    }
  } else if (const auto* prompt = std::get_if<CreativePrompt>(&raw.payload)) {
    if (trim(prompt->text).empty()) throw Error(ErrorCode::EmptyPrompt, "prompt text is empty");
  } else {
    const auto& inpaint = std::get<ImageInpaint>(raw.payload);
    if (inpaint.image.empty()) throw Error(ErrorCode::MissingImage, "inpaint request has no image");
    if (inpaint.mask) {
      if (inpaint.mask->width() != inpaint.image.width() ||
          inpaint.mask->height() != inpaint.image.height()) {
        throw Error(ErrorCode::MaskMismatch,
                    "mask " + std::to_string(inpaint.mask->width()) + "x" +
                        std::to_string(inpaint.mask->height()) + " does not match image " +
                        std::to_string(inpaint.image.width()) + "x" +
                        std::to_string(inpaint.image.height()));
      }
      if (!inpaint.mask->is_binary()) {
        throw Error(ErrorCode::InvalidRequest, "mask pixels must be 0 or 1");
      }
    }
    if (trim(inpaint.instruction).empty()) {
      throw Error(ErrorCode::EmptyPrompt, "inpaint instruction is empty");
    }
  }
  return raw;
}

// ---- library --------------------------------------------------------------

void DefectLibrary::validate() const {
  std::set<std::string> seen;
  for (const auto& m : materials) {
    if (m.material_id.empty()) throw Error(ErrorCode::InvalidLibrary, "material with empty id");
    if (!seen.insert(m.material_id).second) {
      throw Error(ErrorCode::InvalidLibrary, "duplicate material_id " + m.material_id);
    }
  }
  seen.clear();
  for (const auto& d : defects) {
    if (d.defect_id.empty()) throw Error(ErrorCode::InvalidLibrary, "defect with empty id");
    if (!seen.insert(d.defect_id).second) {
      throw Error(ErrorCode::InvalidLibrary, "duplicate defect_id " + d.defect_id);
    }
    try {
      d.spec.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidLibrary, "defect " + d.defect_id + ": " + e.what());
    }
  }
}

const DefectEntry* DefectLibrary::find_defect_type(DefectType t) const {
  const auto it = std::find_if(defects.begin(), defects.end(),
                               [t](const DefectEntry& d) { return d.spec.defect_type == t; });
  return it == defects.end() ? nullptr : &*it;
}

DefectLookup lookup_defect(const DefectLibrary& library, std::string_view material_id,
                           std::string_view defect_id) {
  const auto m = std::find_if(library.materials.begin(), library.materials.end(),
                              [&](const Material& x) { return x.material_id == material_id; });
  if (m == library.materials.end()) {
    throw Error(ErrorCode::UnknownMaterial, "unknown material " + std::string(material_id));
  }
  const auto d = std::find_if(library.defects.begin(), library.defects.end(),
                              [&](const DefectEntry& x) { return x.defect_id == defect_id; });
  if (d == library.defects.end()) {
    throw Error(ErrorCode::UnknownDefect, "unknown defect " + std::string(defect_id));
  }
  DefectSpec spec = d->spec;
  spec.component = m->component_phrase;
  return {*m, std::move(spec), d->prompt_fragment};
}

std::string render_fragment(std::string_view fragment, std::string_view component) {
  static constexpr std::string_view kSlot = "{component}";
  std::string out(fragment);
  for (auto pos = out.find(kSlot); pos != std::string::npos; pos = out.find(kSlot, pos)) {
    out.replace(pos, kSlot.size(), component);
    pos += component.size();
  }
  return out;
}

// ---- json -----------------------------------------------------------------

void to_json(json& j, const BBox& b) { j = json::array({b.x0, b.y0, b.x1, b.y1}); }

void from_json(const json& j, BBox& b) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::InvalidDefectSpec, "location must be [x0,y0,x1,y1]");
  b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void to_json(json& j, const DefectSpec& s) {
  j = json{{"defect_type", to_string(s.defect_type)},
           {"component", s.component},
           {"orientation", to_string(s.orientation)}};
  if (s.defect_type == DefectType::custom) j["custom_text"] = s.custom_text;
  if (s.location) j["location"] = *s.location;
  if (s.size) {
    j["size_value"] = s.size->value;
    j["size_unit"] = to_string(s.size->unit);
  }
  if (s.color_notes) j["color_notes"] = *s.color_notes;
}

void from_json(const json& j, DefectSpec& s) {
  const auto type = parse_defect_type(j.at("defect_type").get<std::string>());
  if (!type) throw Error(ErrorCode::InvalidDefectSpec, "unknown defect_type");
  s.defect_type = *type;
  s.custom_text = j.value("custom_text", std::string{});
  s.component = j.value("component", std::string{});
  s.location.reset();
  if (j.contains("location") && !j["location"].is_null()) s.location = j["location"].get<BBox>();
  s.size.reset();
  if (j.contains("size_value")) {
    const auto unit = parse_size_unit(j.value("size_unit", std::string{"mm"}));
    if (!unit) throw Error(ErrorCode::InvalidDefectSpec, "unknown size_unit");
    s.size = DefectSize{j["size_value"].get<double>(), *unit};
  }
  const auto orient = parse_orientation(j.value("orientation", std::string{"unspecified"}));
  if (!orient) throw Error(ErrorCode::InvalidDefectSpec, "unknown orientation");
  s.orientation = *orient;
  s.color_notes.reset();
  if (j.contains("color_notes") && !j["color_notes"].is_null()) {
    s.color_notes = j["color_notes"].get<std::string>();
  }
}

void to_json(json& j, const DefectLibrary& lib) {
  json materials = json::array();
  for (const auto& m : lib.materials) {
    materials.push_back({{"material_id", m.material_id},
                         {"display_name", m.display_name},
                         {"base_texture_ref", m.base_texture_ref},
                         {"component_phrase", m.component_phrase},
                         {"keywords", m.keywords}});
  }
  json defects = json::array();
  for (const auto& d : lib.defects) {
    defects.push_back({{"defect_id", d.defect_id},
                       {"template", d.spec},
                       {"prompt_fragment", d.prompt_fragment},
                       {"noun", d.noun},
                       {"extent", d.extent}});
  }
  j = json{{"version", lib.version}, {"materials", materials}, {"defects", defects}};
}

DefectLibrary library_from_json(const json& j) {
  try {
    DefectLibrary lib;
    lib.version = j.value("version", std::string{});
    for (const auto& m : j.at("materials")) {
      Material mat;
      mat.material_id = m.at("material_id").get<std::string>();
      mat.display_name = m.value("display_name", mat.material_id);
      mat.base_texture_ref = m.value("base_texture_ref", std::string{});
      mat.component_phrase = m.value("component_phrase", mat.display_name);
      mat.keywords = m.value("keywords", std::vector<std::string>{});
      lib.materials.push_back(std::move(mat));
    }
    for (const auto& d : j.at("defects")) {
      DefectEntry entry;
      entry.defect_id = d.at("defect_id").get<std::string>();
      entry.spec = d.at("template").get<DefectSpec>();
      entry.prompt_fragment = d.value("prompt_fragment", entry.defect_id + " on the {component}");
      entry.noun = d.value("noun", std::string(to_string(entry.spec.defect_type)));
      entry.extent = d.value("extent", std::string{});
      lib.defects.push_back(std::move(entry));
    }
    lib.validate();
    return lib;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidLibrary, std::string("library schema: ") + e.what());
  }
}

DefectLibrary load_library(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open library " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidLibrary, std::string("library parse: ") + e.what());
  }
  return library_from_json(j);
}

}  // namespace tmd
