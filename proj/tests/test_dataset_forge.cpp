#include <doctest.h>

#include <atomic>
#include <fstream>

#include "support/fixtures.hpp"
#include "support/stub_model_server.hpp"
#include "tmd/dataset_forge.hpp"
#include "tmd/digest.hpp"
#include "tmd/error.hpp"

using namespace tmd;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected tmd::Error");
  return ErrorCode::NotFound;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

const fs::path crack_png() { return testing::fixture_images_dir() / "rail_head_crack.png"; }

OfflineCaptionTable fixture_captions() {
  return OfflineCaptionTable::load(testing::data_dir() / "fixtures" / "captions.json");
}

class ConstantRephraser final : public RephraseBackend {
 public:
  std::string rephrase(const TextureCaption&, int, std::uint64_t) override {
    ++calls;
    return "always the same";
  }
  std::atomic<int> calls{0};
};

class ConstantCaptioner final : public CaptionBackend {
 public:
  explicit ConstantCaptioner(std::string text) : text_(std::move(text)) {}
  std::string caption(std::string_view, std::span<const std::uint8_t>, const ImageRef&) override { return text_; }

 private:
  std::string text_;
};

TextureCaption caption_of(std::string text, std::string sha = std::string(64, 'a')) {
  return {ImageRef{std::move(sha), "x.png"}, std::move(text)};
}

TextureDataset fixture_dataset(std::uint64_t seed = 0) {
  auto captions = fixture_captions();
  OfflineRephraser rephraser;
  ForgeConfig cfg;
  cfg.seed = seed;
  return forge_dataset(list_images(testing::fixture_images_dir()), cfg, captions, rephraser,
                       "2024-01-01T00:00:00Z");
}

}  // namespace

TEST_CASE("forge config invariants") {
  ForgeConfig c;
  CHECK_NOTHROW(c.validate());
  c.k = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c.k = 1;
  c.max_attempts_factor = 1;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("caption_image") {
  auto table = fixture_captions();
  const auto bytes = testing::read_bytes(crack_png());
  const auto cap = caption_image(bytes, crack_png().string(), "defect-texture/1", table);
  CHECK(cap.text ==
        "A thin dark transverse crack runs across the polished steel of the rail head, with slight rust "
        "discoloration along its edges.");
  CHECK(cap.image_ref.sha256 == sha256_hex(bytes));
  CHECK(cap.image_ref.key() == "sha256:" + sha256_hex(bytes));

  CHECK(code_of([&] { caption_image({}, "empty.png", "defect-texture/1", table); }) == ErrorCode::EmptyInput);
  ConstantCaptioner blank("  ");
  CHECK(code_of([&] { caption_image(bytes, "x", "defect-texture/1", blank); }) == ErrorCode::EmptyCaption);
  CHECK(code_of([&] { caption_image(bytes, "x", "nope/9", table); }) == ErrorCode::UnknownTemplate);
  const std::vector<std::uint8_t> other{1, 2, 3};
  CHECK(code_of([&] { caption_image(other, "x", "defect-texture/1", table); }) == ErrorCode::BackendUnavailable);
}

TEST_CASE("offline rephraser first outputs") {
  OfflineRephraser r;
  ForgeConfig cfg;
  cfg.k = 3;
  const auto out = rephrase_caption(caption_of("A crack on the rail"), cfg, r);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == "A crack on the rail.");
  CHECK(out[1] == "Texture detail: a crack on the rail.");
  CHECK(out[2] == "Close-up of the defect texture. A crack on the rail.");

  cfg.seed = 8;  // starts one qualifier along
  CHECK(rephrase_caption(caption_of("A crack on the rail"), cfg, r)[0] ==
        "A crack on the rail. Lighting is diffuse daylight.");

  cfg.k = OfflineRephraser::kFrames * OfflineRephraser::kQualifiers;
  cfg.max_attempts_factor = 2;
  CHECK(rephrase_caption(caption_of("Rust."), cfg, r).size() == 48);
}

TEST_CASE("constant backend exhausts the attempt cap") {
  for (auto [k, factor] : {std::pair{2, 5}, {10, 10}, {3, 2}}) {
    ConstantRephraser r;
    ForgeConfig cfg;
    cfg.k = k;
    cfg.max_attempts_factor = factor;
    CHECK(code_of([&] { rephrase_caption(caption_of("x"), cfg, r); }) == ErrorCode::ExhaustedAttempts);
    CHECK(r.calls == k * factor);
  }
}

TEST_CASE("uniqueness is NFC plus trailing-whitespace trim") {
  class Variants final : public RephraseBackend {
   public:
    std::string rephrase(const TextureCaption&, int attempt, std::uint64_t) override {
      static const char* kOut[] = {"caf\xC3\xA9", "cafe\xCC\x81", "caf\xC3\xA9  \t", "", "other", "third"};
      ++calls;
      return kOut[attempt % 6];
    }
    int calls = 0;
  } r;
  ForgeConfig cfg;
  cfg.k = 3;
  const auto out = rephrase_caption(caption_of("x"), cfg, r);
  CHECK(out == std::vector<std::string>{"caf\xC3\xA9", "other", "third"});
  CHECK(r.calls == 6);
}

TEST_CASE("attach_system_message") {
  const auto bytes = testing::read_bytes(crack_png());
  auto table = fixture_captions();
  const auto cap = caption_image(bytes, crack_png().string(), "defect-texture/1", table);

  const auto golden = nlohmann::json::parse(testing::read_text(fs::path(TMD_GOLDEN_DIR) / "sample_crack.json"));
  const auto s = attach_system_message(cap, cap.text, "defect-texture/1");
  CHECK(s.id == golden["id"]);
  CHECK(s.system_message == golden["system"]);
  CHECK(s.user_instruction == golden["user"]["text"]);
  CHECK(s.image_ref.key() == golden["user"]["image_ref"]);
  CHECK(s.response_text == golden["assistant"]);
  CHECK(s.is_valid());

  CHECK(attach_system_message(cap, "resp A", "defect-texture/1").id ==
        attach_system_message(cap, "resp A", "defect-texture/1").id);
  CHECK(attach_system_message(cap, "resp A", "defect-texture/1").id !=
        attach_system_message(cap, "resp B", "defect-texture/1").id);
  CHECK(code_of([&] { attach_system_message(cap, "r", "missing"); }) == ErrorCode::UnknownTemplate);
}

TEST_CASE("assemble_dataset") {
  const auto cap1 = caption_of("A crack.", std::string(64, '1'));
  const auto cap2 = caption_of("Some rust.", std::string(64, '2'));
  ForgeConfig cfg;
  cfg.k = 2;
  std::vector<InstructionSample> samples{
      attach_system_message(cap2, "b", "defect-texture/1"), attach_system_message(cap1, "z", "defect-texture/1"),
      attach_system_message(cap1, "a", "defect-texture/1"), attach_system_message(cap2, "a", "defect-texture/1")};
  const auto ds = assemble_dataset(samples, cfg, "t");
  REQUIRE(ds.entries.size() == 4);
  CHECK(ds.entries[0].response_text == "a");
  CHECK(ds.entries[0].image_ref.sha256 == std::string(64, '1'));
  CHECK(ds.entries[1].response_text == "z");
  CHECK(ds.entries[3].response_text == "b");

  auto dup = samples;
  dup.push_back(samples[0]);
  CHECK(code_of([&] { assemble_dataset(dup, cfg, "t"); }) == ErrorCode::DuplicateEntry);

  samples.pop_back();
  CHECK(code_of([&] { assemble_dataset(samples, cfg, "t"); }) == ErrorCode::CountMismatch);

  const auto empty = assemble_dataset({}, cfg, "t");
  CHECK(empty.entries.empty());
}

TEST_CASE("five fixture captions with K=10 give 50 distinct entries") {
  const auto ds = fixture_dataset();
  REQUIRE(ds.entries.size() == 50);
  std::map<std::string, int> per_image;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    ++per_image[ds.entries[i].image_ref.sha256];
    CHECK(ds.entries[i].is_valid());
    for (std::size_t j = i + 1; j < ds.entries.size(); ++j) {
      REQUIRE_FALSE((ds.entries[i].image_ref == ds.entries[j].image_ref &&
                     ds.entries[i].response_text == ds.entries[j].response_text));
      REQUIRE(ds.entries[i].id != ds.entries[j].id);
    }
  }
  CHECK(per_image.size() == 5);
  for (const auto& [sha, n] : per_image) CHECK(n == 10);
}

TEST_CASE("forge is byte-deterministic for a fixed seed") {
  CHECK(dataset_to_jsonl(fixture_dataset(4)) == dataset_to_jsonl(fixture_dataset(4)));
  CHECK(dataset_to_jsonl(fixture_dataset(4)) != dataset_to_jsonl(fixture_dataset(5)));
}

TEST_CASE("identical image files are captioned once") {
  testing::TempDir dir;
  for (const auto& p : list_images(testing::fixture_images_dir())) fs::copy_file(p, dir / p.filename().string());
  fs::copy_file(crack_png(), dir / "zz_copy.png");
  auto table = fixture_captions();
  OfflineRephraser r;
  const auto ds = forge_dataset(list_images(dir.path()), ForgeConfig{}, table, r, "t");
  CHECK(ds.entries.size() == 50);
}

TEST_CASE("export and import round trip") {
  testing::TempDir dir;
  const auto ds = fixture_dataset(9);
  export_dataset(ds, dir / "ds.jsonl");
  const auto text = testing::read_text(dir / "ds.jsonl");
  CHECK(text.find('\r') == std::string::npos);
  const auto header = nlohmann::json::parse(text.substr(0, text.find('\n')));
  CHECK(header["schema"] == "tmd-dataset/1");
  CHECK(header["k"] == 10);
  CHECK(header["seed"] == 9);
  CHECK(import_dataset(dir / "ds.jsonl") == ds);
  CHECK(code_of([&] { import_dataset(dir / "missing.jsonl"); }) == ErrorCode::IoFailure);
}

TEST_CASE("corrupt dataset files") {
  const auto ds = fixture_dataset();
  const std::string good = dataset_to_jsonl(ds);
  std::vector<std::string> lines;
  for (std::size_t s = 0, e; s < good.size(); s = e + 1) {
    e = good.find('\n', s);
    lines.push_back(good.substr(s, e - s));
  }
  auto join = [](const std::vector<std::string>& ls) {
    std::string out;
    for (const auto& l : ls) out += l + "\n";
    return out;
  };

  SUBCASE("missing system field") {
    auto ls = lines;
    auto j = nlohmann::json::parse(ls[3]);
    j.erase("system");
    ls[3] = j.dump();
    const auto msg = error_text([&] { dataset_from_jsonl(join(ls)); });
    CHECK(code_of([&] { dataset_from_jsonl(join(ls)); }) == ErrorCode::SchemaViolation);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("system") != std::string::npos);
  }
  SUBCASE("duplicate sample line") {
    auto ls = lines;
    ls.insert(ls.begin() + 8, ls[5]);
    const auto msg = error_text([&] { dataset_from_jsonl(join(ls)); });
    CHECK(code_of([&] { dataset_from_jsonl(join(ls)); }) == ErrorCode::SchemaViolation);
    CHECK(msg.find("line 8") != std::string::npos);
    CHECK(msg.find("line 5") != std::string::npos);
  }
  SUBCASE("not json") {
    auto ls = lines;
    ls[12] = "{oops";
    CHECK(error_text([&] { dataset_from_jsonl(join(ls)); }).find("line 12") != std::string::npos);
  }
  SUBCASE("bad header") {
    auto ls = lines;
    ls[0] = R"({"schema":"other/2","k":10,"seed":0})";
    CHECK(error_text([&] { dataset_from_jsonl(join(ls)); }).find("line 0") != std::string::npos);
  }
  SUBCASE("missing entries") {
    auto ls = lines;
    ls.pop_back();
    CHECK(code_of([&] { dataset_from_jsonl(join(ls)); }) == ErrorCode::SchemaViolation);
  }
  SUBCASE("bad image ref") {
    auto ls = lines;
    auto j = nlohmann::json::parse(ls[1]);
    j["user"]["image_ref"] = "md5:abc";
    ls[1] = j.dump();
    CHECK(error_text([&] { dataset_from_jsonl(join(ls)); }).find("line 1") != std::string::npos);
  }
}

TEST_CASE("remote captioner and rephraser over the stub server") {
  testing::StubModelServer stub;
  ChatEndpoint ep;
  ep.http.base_url = stub.base_url();
  ep.http.timeout = std::chrono::milliseconds(3000);
  RemoteCaptioner captioner(ep);
  RemoteRephraser rephraser(ep);

  stub.set_chat_reply([](const nlohmann::json& req) {
    const auto& content = req["messages"][1]["content"];
    if (content.is_array()) return std::string("A crack across the rail head.");
    return "Variant " + content.get<std::string>().substr(content.get<std::string>().find("(variation"));
  });
  const auto bytes = testing::read_bytes(crack_png());
  const auto cap = caption_image(bytes, "c.png", "defect-texture/1", captioner);
  CHECK(cap.text == "A crack across the rail head.");
  const auto req = stub.last_chat_request();
  CHECK(req["messages"][1]["content"][1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0) ==
        0);

  ForgeConfig cfg;
  cfg.k = 4;
  const auto out = rephrase_caption(cap, cfg, rephraser);
  CHECK(out.size() == 4);
  CHECK(stub.chat_calls() == 5);
}

TEST_CASE("timestamp honours SOURCE_DATE_EPOCH") {
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  CHECK(dataset_timestamp() == "1970-01-01T00:00:00Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  CHECK(dataset_timestamp().size() == 20);
}
