#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tmd/raster.hpp"

namespace tmd {

enum class DefectType { crack, rust, wear, decay, squat, custom };
enum class SizeUnit { inch, mm };
enum class Orientation { transverse, longitudinal, diagonal, unspecified };

std::string_view to_string(DefectType t);
std::string_view to_string(SizeUnit u);
std::string_view to_string(Orientation o);
std::optional<DefectType> parse_defect_type(std::string_view s);
std::optional<SizeUnit> parse_size_unit(std::string_view s);
std::optional<Orientation> parse_orientation(std::string_view s);

/// Normalized bounding box, coordinates in [0, 1].
struct BBox {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Names the cell of a 3x3 grid holding the box center: "top-left", "top-center",
/// "center-left", "center", ..., "bottom-right".
std::string region_name(const BBox& box);
/// Inverse of region_name: the grid cell as a box. Empty for unknown names.
std::optional<BBox> region_box(std::string_view name);
/// All nine region names, row-major.
const std::vector<std::string>& region_names();

struct DefectSize {
  double value = 0;
  SizeUnit unit = SizeUnit::mm;
  friend bool operator==(const DefectSize&, const DefectSize&) = default;
};

struct DefectSpec {
  DefectType defect_type = DefectType::crack;
  std::string custom_text;  // only for DefectType::custom
  std::string component;
  std::optional<BBox> location;
  std::optional<DefectSize> size;  // absent when a parse could not recover it
  Orientation orientation = Orientation::unspecified;
  std::optional<std::string> color_notes;

  /// Throws Error(InvalidDefectSpec) on a violated invariant.
  void validate() const;

  friend bool operator==(const DefectSpec&, const DefectSpec&) = default;
};

// ---- scenario requests ----------------------------------------------------

enum class ScenarioKind { LibrarySelect, CreativePrompt, ImageInpaint };

std::string_view to_string(ScenarioKind k);
std::optional<ScenarioKind> parse_scenario_kind(std::string_view s);
/// 1, 2 or 3 in the order the interaction modes are numbered.
int scenario_number(ScenarioKind k);

struct LibrarySelect {
  std::string material_id;
  std::string defect_id;
  friend bool operator==(const LibrarySelect&, const LibrarySelect&) = default;
};

struct CreativePrompt {
  std::string text;
  friend bool operator==(const CreativePrompt&, const CreativePrompt&) = default;
};

struct ImageInpaint {
  Raster image;
  std::optional<Mask> mask;
  std::string instruction;
  friend bool operator==(const ImageInpaint&, const ImageInpaint&) = default;
};

struct ScenarioRequest {
  std::string request_id;
  std::optional<std::uint64_t> seed;
  std::variant<LibrarySelect, CreativePrompt, ImageInpaint> payload;

  ScenarioKind kind() const noexcept;

  friend bool operator==(const ScenarioRequest&, const ScenarioRequest&) = default;
};

/// Returns the request unchanged when every invariant holds.
/// Throws Error with MissingImage, MaskMismatch, EmptyPrompt or InvalidRequest.
ScenarioRequest validate_request(const ScenarioRequest& raw);

// ---- defect library -------------------------------------------------------

struct Material {
  std::string material_id;
  std::string display_name;
  std::string base_texture_ref;
  std::string component_phrase;       // e.g. "head of the rail"
  std::vector<std::string> keywords;  // words that identify this material in free text

  friend bool operator==(const Material&, const Material&) = default;
};

struct DefectEntry {
  std::string defect_id;
  DefectSpec spec;              // template
  std::string prompt_fragment;  // may contain "{component}"
  std::string noun;             // "crack", "rust patch", ...
  std::string extent;           // word after the size: "long", "across", ...

  friend bool operator==(const DefectEntry&, const DefectEntry&) = default;
};

struct DefectLibrary {
  std::string version;
  std::vector<Material> materials;
  std::vector<DefectEntry> defects;

  /// Throws Error(InvalidLibrary) on duplicate ids or an invalid template.
  void validate() const;
  const DefectEntry* find_defect_type(DefectType t) const;

  friend bool operator==(const DefectLibrary&, const DefectLibrary&) = default;
};

struct DefectLookup {
  Material material;
  DefectSpec spec;
  std::string prompt_fragment;
  friend bool operator==(const DefectLookup&, const DefectLookup&) = default;
};

/// Throws UnknownMaterial or UnknownDefect.
DefectLookup lookup_defect(const DefectLibrary& library, std::string_view material_id,
                           std::string_view defect_id);

/// Substitutes "{component}" in a prompt fragment.
std::string render_fragment(std::string_view fragment, std::string_view component);

DefectLibrary load_library(const std::filesystem::path& path);
DefectLibrary library_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const BBox& b);
void from_json(const nlohmann::json& j, BBox& b);
void to_json(nlohmann::json& j, const DefectSpec& s);
void from_json(const nlohmann::json& j, DefectSpec& s);
void to_json(nlohmann::json& j, const DefectLibrary& lib);

}  // namespace tmd
