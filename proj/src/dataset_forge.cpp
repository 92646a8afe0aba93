#include "tmd/dataset_forge.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "tmd/digest.hpp"
#include "tmd/error.hpp"
#include "tmd/prompt_tuner.hpp"
#include "tmd/text.hpp"

namespace tmd {

using nlohmann::json;

ImageRef ImageRef::of_bytes(std::span<const std::uint8_t> bytes, std::string path) {
  return {sha256_hex(bytes), std::move(path)};
}

bool InstructionSample::is_valid() const {
  return !id.empty() && !trim(system_message).empty() && !trim(user_instruction).empty() &&
         !trim(response_text).empty() && !image_ref.sha256.empty();
}

void ForgeConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "K must be >= 1");
  if (max_attempts_factor < 2) throw Error(ErrorCode::InvalidConfig, "max_attempts_factor must be >= 2");
}

// ---- templates --------------------------------------------------------------

namespace {

const std::map<std::string, ForgeTemplate, std::less<>>& templates() {
  static const std::map<std::string, ForgeTemplate, std::less<>> registry{
      {"defect-texture/1",
       {"Describe the defect texture in this railway component image. Mention the defect type, "
        "its approximate size, orientation, location on the component, colour, and surface "
        "character in one or two sentences.",
        "You are a railway inspection assistant specialised in {defect} defect textures. The "
        "reply is a concise rephrasing of an image caption that keeps the visual "
        "characteristics of the {defect} texture.",
        "Describe the {defect} defect texture shown in the image."}},
  };
  return registry;
}

std::string fill_defect(std::string_view pattern, std::string_view defect) {
  static constexpr std::string_view kSlot = "{defect}";
  std::string out(pattern);
  for (auto pos = out.find(kSlot); pos != std::string::npos; pos = out.find(kSlot, pos)) {
    out.replace(pos, kSlot.size(), defect);
    pos += defect.size();
  }
  return out;
}

std::string ensure_period(std::string s) {
  s = trim(s);
  if (!s.empty() && s.back() != '.' && s.back() != '!' && s.back() != '?') s.push_back('.');
  return s;
}

std::string lower_first(std::string s) {
  if (s.size() > 1 && std::isupper(static_cast<unsigned char>(s[0])) &&
      !std::isupper(static_cast<unsigned char>(s[1]))) {
    s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  }
  return s;
}

std::string upper_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

const ForgeTemplate& forge_template(std::string_view template_id) {
  const auto& reg = templates();
  const auto it = reg.find(template_id);
  if (it == reg.end()) throw Error(ErrorCode::UnknownTemplate, "unknown template " + std::string(template_id));
  return it->second;
}

std::vector<std::string> forge_template_ids() {
  std::vector<std::string> out;
  for (const auto& [id, t] : templates()) out.push_back(id);
  return out;
}

// ---- backends ---------------------------------------------------------------

OfflineCaptionTable OfflineCaptionTable::load(const std::filesystem::path& json_file) {
  std::ifstream in(json_file);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open caption table " + json_file.string());
  try {
    const json j = json::parse(in);
    std::map<std::string, std::string> table;
    for (const auto& [sha, text] : j.at("captions").items()) table.emplace(sha, text.get<std::string>());
    return OfflineCaptionTable(std::move(table));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("caption table: ") + e.what());
  }
}

std::string OfflineCaptionTable::caption(std::string_view, std::span<const std::uint8_t>, const ImageRef& ref) {
  const auto it = table_.find(ref.sha256);
  if (it == table_.end()) {
    throw Error(ErrorCode::BackendUnavailable, "offline caption table has no entry for " + ref.key() +
                                                   " (" + ref.path + ")");
  }
  return it->second;
}

std::string RemoteCaptioner::caption(std::string_view prompt, std::span<const std::uint8_t> image_bytes,
                                     const ImageRef&) {
  const json content = json::array({
      {{"type", "text"}, {"text", prompt}},
      {{"type", "image_url"},
       {"image_url", {{"url", "data:image/png;base64," + base64_encode(image_bytes)}}}},
  });
  return chat_complete(endpoint_, "You caption railway defect images.", content).text;
}

std::string OfflineRephraser::rephrase(const TextureCaption& caption, int attempt, std::uint64_t seed) {
  static constexpr std::array<const char*, kFrames> kFramesText{
      "{C}",
      "Texture detail: {c}",
      "Close-up of the defect texture. {C}",
      "{C} The texture is seen at close range.",
      "Inspection view: {c}",
      "{C} Surface detail is sharp and well defined.",
      "Fine-grained defect texture study: {c}",
      "{C} Presented as a flat texture patch for 3D use.",
  };
  static constexpr std::array<const char*, kQualifiers> kQualifierText{
      "",
      " Lighting is diffuse daylight.",
      " Lighting is low-angle and raking.",
      " Lighting is overcast and even.",
      " The surface is slightly damp.",
      " The surface is dry and dusty.",
  };
  constexpr std::uint64_t kCycle = kFrames * kQualifiers;
  const std::uint64_t index = (static_cast<std::uint64_t>(attempt) + seed % kCycle) % kCycle;
  const std::string base = ensure_period(caption.text);
  std::string out = kFramesText[index % kFrames];
  auto put = [&](std::string_view slot, const std::string& value) {
    const auto pos = out.find(slot);
    if (pos != std::string::npos) out.replace(pos, slot.size(), value);
  };
  put("{C}", upper_first(base));
  put("{c}", lower_first(base));
  return out + kQualifierText[index / kFrames];
}

std::string RemoteRephraser::rephrase(const TextureCaption& caption, int attempt, std::uint64_t seed) {
  const std::string system =
      "Rephrase the railway defect texture description. Keep every visual characteristic "
      "(defect type, size, orientation, location, colour) and vary the wording. Reply with the "
      "description only.";
  const std::string user = caption.text + "\n(variation " + std::to_string(attempt) + ", seed " +
                           std::to_string(seed) + ")";
  return chat_complete(endpoint_, system, user).text;
}

// ---- operations -------------------------------------------------------------

TextureCaption caption_image(std::span<const std::uint8_t> image_bytes, std::string path,
                             std::string_view template_id, CaptionBackend& backend) {
  if (image_bytes.empty()) throw Error(ErrorCode::EmptyInput, "image " + path + " is empty");
  const ForgeTemplate& tpl = forge_template(template_id);
  TextureCaption out;
  out.image_ref = ImageRef::of_bytes(image_bytes, std::move(path));
  out.text = trim(backend.caption(tpl.caption_prompt, image_bytes, out.image_ref));
  if (out.text.empty()) throw Error(ErrorCode::EmptyCaption, "caption backend returned blank text");
  return out;
}

std::string normalize_description(std::string_view text) { return trim_right(nfc_normalize(text)); }

std::vector<std::string> rephrase_caption(const TextureCaption& caption, const ForgeConfig& config,
                                          RephraseBackend& backend) {
  config.validate();
  const int cap = config.max_attempts_factor * config.k;
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (int attempt = 0; attempt < cap && static_cast<int>(out.size()) < config.k; ++attempt) {
    std::string candidate = normalize_description(backend.rephrase(caption, attempt, config.seed));
    if (trim(candidate).empty()) continue;
    if (seen.insert(candidate).second) out.push_back(std::move(candidate));
  }
  if (static_cast<int>(out.size()) < config.k) {
    throw Error(ErrorCode::ExhaustedAttempts,
                "only " + std::to_string(out.size()) + " of " + std::to_string(config.k) +
                    " distinct descriptions after " + std::to_string(cap) + " calls for " +
                    caption.image_ref.key());
  }
  return out;
}

std::string sample_id(const ImageRef& ref, std::string_view response_text) {
  return "tmd-" + sha256_hex(ref.sha256 + "\n" + std::string(response_text)).substr(0, 24);
}

InstructionSample attach_system_message(const TextureCaption& caption, std::string_view response_text,
                                        std::string_view template_id) {
  if (trim(caption.text).empty() || trim(response_text).empty()) {
    throw Error(ErrorCode::EmptyInput, "caption and response must be non-empty");
  }
  const ForgeTemplate& tpl = forge_template(template_id);
  const auto type = find_defect_type(caption.text);
  const std::string defect = type ? std::string(to_string(*type)) : std::string("surface");

  InstructionSample s;
  s.image_ref = caption.image_ref;
  s.response_text = std::string(response_text);
  s.system_message = fill_defect(tpl.system_message, defect);
  s.user_instruction = fill_defect(tpl.user_instruction, defect);
  s.id = sample_id(s.image_ref, s.response_text);
  return s;
}

namespace {

/// Checks both dataset invariants; `fail` builds the error for a 0-based entry index.
template <typename Fail>
void check_invariants(const std::vector<InstructionSample>& entries, int k, Fail fail) {
  std::map<std::pair<std::string, std::string>, std::size_t> pairs;
  std::map<std::string, int> per_image;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    auto [it, fresh] = pairs.emplace(std::make_pair(e.image_ref.sha256, e.response_text), i);
    if (!fresh) fail(ErrorCode::DuplicateEntry, i, "duplicates entry " + std::to_string(it->second));
    if (!ids.insert(e.id).second) fail(ErrorCode::DuplicateEntry, i, "duplicate id " + e.id);
    ++per_image[e.image_ref.sha256];
  }
  for (const auto& [sha, count] : per_image) {
    if (count != k) {
      fail(ErrorCode::CountMismatch, entries.size(),
           "image sha256:" + sha + " has " + std::to_string(count) + " entries, expected " + std::to_string(k));
    }
  }
}

}  // namespace

TextureDataset assemble_dataset(std::vector<InstructionSample> samples, const ForgeConfig& config,
                                std::string created_at) {
  config.validate();
  for (const auto& s : samples) {
    if (!s.is_valid()) throw Error(ErrorCode::SchemaViolation, "invalid sample " + s.id);
  }
  std::sort(samples.begin(), samples.end(), [](const InstructionSample& a, const InstructionSample& b) {
    return std::tie(a.image_ref.sha256, a.response_text) < std::tie(b.image_ref.sha256, b.response_text);
  });
  check_invariants(samples, config.k, [](ErrorCode code, std::size_t, const std::string& msg) {
    throw Error(code, msg);
  });
  return {std::move(samples), config, std::move(created_at)};
}

// ---- JSON Lines -------------------------------------------------------------

std::string dataset_to_jsonl(const TextureDataset& dataset) {
  std::string out;
  const json header{{"schema", kDatasetSchema},
                    {"k", dataset.forge_config.k},
                    {"seed", dataset.forge_config.seed},
                    {"max_attempts_factor", dataset.forge_config.max_attempts_factor},
                    {"caption_template_id", dataset.forge_config.caption_template_id},
                    {"created_at", dataset.created_at}};
  out += header.dump() + "\n";
  for (const auto& e : dataset.entries) {
    const json line{{"id", e.id},
                    {"system", e.system_message},
                    {"user", {{"text", e.user_instruction},
                              {"image_ref", e.image_ref.key()},
                              {"image_path", e.image_ref.path}}},
                    {"assistant", e.response_text}};
    out += line.dump() + "\n";
  }
  return out;
}

void export_dataset(const TextureDataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << dataset_to_jsonl(dataset);
  if (!out.flush()) throw Error(ErrorCode::IoFailure, "write failed on " + path.string());
}

namespace {

[[noreturn]] void schema_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::SchemaViolation, "line " + std::to_string(line) + ": " + what);
}

std::string required_string(const json& obj, const char* field, std::size_t line) {
  if (!obj.is_object() || !obj.contains(field)) schema_error(line, std::string("missing field \"") + field + "\"");
  if (!obj[field].is_string()) schema_error(line, std::string("field \"") + field + "\" is not a string");
  return obj[field].get<std::string>();
}

}  // namespace

TextureDataset dataset_from_jsonl(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty()) schema_error(0, "missing header");

  TextureDataset ds;
  json header;
  try {
    header = json::parse(lines[0]);
  } catch (const json::parse_error& e) {
    schema_error(0, std::string("header is not JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("schema", std::string{}) != kDatasetSchema) {
    schema_error(0, std::string("schema must be \"") + kDatasetSchema + "\"");
  }
  try {
    ds.forge_config.k = header.at("k").get<int>();
    ds.forge_config.seed = header.at("seed").get<std::uint64_t>();
    ds.forge_config.max_attempts_factor = header.value("max_attempts_factor", 10);
    ds.forge_config.caption_template_id = header.value("caption_template_id", std::string{"defect-texture/1"});
    ds.created_at = header.value("created_at", std::string{});
    ds.forge_config.validate();
  } catch (const json::exception& e) {
    schema_error(0, std::string("bad header field: ") + e.what());
  } catch (const Error& e) {
    schema_error(0, e.what());
  }

  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) schema_error(i, "blank line");
    json line;
    try {
      line = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      schema_error(i, std::string("not JSON: ") + e.what());
    }
    InstructionSample s;
    s.id = required_string(line, "id", i);
    s.system_message = required_string(line, "system", i);
    s.response_text = required_string(line, "assistant", i);
    if (!line.contains("user") || !line["user"].is_object()) schema_error(i, "missing field \"user\"");
    const json& user = line["user"];
    s.user_instruction = required_string(user, "text", i);
    const std::string ref = required_string(user, "image_ref", i);
    if (ref.rfind("sha256:", 0) != 0 || ref.size() != 7 + 64) schema_error(i, "image_ref must be sha256:<64 hex>");
    s.image_ref.sha256 = ref.substr(7);
    s.image_ref.path = user.value("image_path", std::string{});
    if (!s.is_valid()) schema_error(i, "empty field");
    ds.entries.push_back(std::move(s));
  }

  check_invariants(ds.entries, ds.forge_config.k, [](ErrorCode, std::size_t index, const std::string& msg) {
    // entry i sits on line i + 1
    const std::string detail = msg.rfind("duplicates entry ", 0) == 0
                                   ? "duplicates line " + std::to_string(std::stoul(msg.substr(17)) + 1)
                                   : msg;
    schema_error(index + 1, detail);
  });
  return ds;
}

TextureDataset import_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return dataset_from_jsonl(buf.str());
}

// ---- pipeline ---------------------------------------------------------------

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(ErrorCode::IoFailure, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = to_lower(entry.path().extension().string());
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

TextureDataset forge_dataset(const std::vector<std::filesystem::path>& images, const ForgeConfig& config,
                             CaptionBackend& captioner, RephraseBackend& rephraser, std::string created_at) {
  config.validate();
  forge_template(config.caption_template_id);

  struct Source {
    std::vector<std::uint8_t> bytes;
    std::string path;
  };
  std::vector<Source> sources;
  std::set<std::string> seen;
  for (const auto& p : images) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + p.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!bytes.empty() && !seen.insert(sha256_hex(bytes)).second) continue;
    sources.push_back({std::move(bytes), p.generic_string()});
  }

  std::vector<std::future<std::vector<InstructionSample>>> tasks;
  tasks.reserve(sources.size());
  for (const auto& src : sources) {
    tasks.push_back(std::async(std::launch::async, [&, &src = src] {
      const auto caption = caption_image(src.bytes, src.path, config.caption_template_id, captioner);
      std::vector<InstructionSample> samples;
      for (const auto& text : rephrase_caption(caption, config, rephraser)) {
        samples.push_back(attach_system_message(caption, text, config.caption_template_id));
      }
      return samples;
    }));
  }
  std::vector<InstructionSample> all;
  for (auto& t : tasks) {
    auto part = t.get();
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return assemble_dataset(std::move(all), config, std::move(created_at));
}

std::string dataset_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      t = static_cast<std::time_t>(std::stoll(epoch));
    } catch (...) {
    }
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace tmd
