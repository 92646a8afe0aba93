#include <doctest.h>

#include <cstdlib>

#include "support/fixtures.hpp"
#include "support/stub_model_server.hpp"
#include "tmd/error.hpp"
#include "tmd/metering.hpp"
#include "tmd/prompt_tuner.hpp"

using namespace tmd;

namespace {

const DefectLibrary& library() {
  static const DefectLibrary lib = load_library(testing::data_dir() / "defect_library.json");
  return lib;
}

ScenarioRequest prompt(std::string text) {
  ScenarioRequest r;
  r.request_id = "t";
  r.payload = CreativePrompt{std::move(text)};
  return r;
}

class ScriptedTuner final : public TunerBackend {
 public:
  explicit ScriptedTuner(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  Completion complete(std::string_view, std::string_view user) override {
    last_user = std::string(user);
    const auto& text = replies_[std::min(calls++, replies_.size() - 1)];
    return {text, 3, count_tokens(text)};
  }
  std::string backend_id() const override { return "scripted"; }
  std::size_t calls = 0;
  std::string last_user;

 private:
  std::vector<std::string> replies_;
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected tmd::Error");
  return ErrorCode::NotFound;
}

}  // namespace

TEST_CASE("offline tuner reproduces the reference tuned prompt") {
  OfflineTemplateTuner tuner(library());
  const auto tuned = tune_prompt(prompt("crack on the rail"), library(), tuner);
  CHECK(tuned.original == "crack on the rail");
  CHECK(tuned.refined_text ==
        "A transverse crack, approximately 2 inches long, located on the head of the rail, with slight rust "
        "discoloration around the edges.");
  CHECK(tuned.attributes.defect_type == DefectType::crack);
  CHECK(tuned.attributes.orientation == Orientation::transverse);
  CHECK(tuned.attributes.component == "head of the rail");
  CHECK(tuned.completion_tokens == count_tokens(tuned.refined_text));
  CHECK(tuned.prompt_tokens == count_tokens(tuner_system_prompt()) + count_tokens("crack on the rail"));
}

TEST_CASE("offline tuner slot-fills from the library template") {
  OfflineTemplateTuner tuner(library());
  // rust template: no orientation, 30 mm across, oxide colour notes; material from "fastener"
  CHECK(tune_prompt(prompt("rust on fastener"), library(), tuner).refined_text ==
        "A rust patch, approximately 30 mm across, located on the fastener, with flaking orange-brown oxide "
        "scale.");
  // user-supplied size and orientation override the template
  CHECK(tune_prompt(prompt("longitudinal crack of 5 cm on the sleeper"), library(), tuner).refined_text ==
        "A longitudinal crack, approximately 50 mm long, located on the sleeper, with slight rust discoloration "
        "around the edges.");
}

TEST_CASE("offline tuner is deterministic") {
  OfflineTemplateTuner a(library()), b(library());
  for (const auto* text : {"crack on the rail", "worn rail head", "squat", "rusty bolt 12 mm"}) {
    CHECK(tune_prompt(prompt(text), library(), a) == tune_prompt(prompt(text), library(), b));
  }
}

TEST_CASE("library selections across the whole cross product tune to valid specs") {
  OfflineTemplateTuner tuner(library());
  for (const auto& m : library().materials) {
    for (const auto& d : library().defects) {
      ScenarioRequest r;
      r.request_id = "x";
      r.payload = LibrarySelect{m.material_id, d.defect_id};
      const auto tuned = tune_prompt(r, library(), tuner);
      CHECK(tuned.original == render_fragment(d.prompt_fragment, m.component_phrase));
      CHECK(meets_tuned_invariants(tuned.refined_text));
      const auto spec = extract_attributes(tuned.refined_text);
      CHECK(spec.defect_type == d.spec.defect_type);
      CHECK(spec.component == m.component_phrase);
      CHECK_NOTHROW(spec.validate());
      CHECK(tuned.completion_tokens == count_tokens(tuned.refined_text));
    }
  }
}

TEST_CASE("inpaint mask becomes a verbal region") {
  Mask mask(90, 90);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) mask.set(x, y, true);
  ScenarioRequest r;
  r.request_id = "i";
  r.payload = ImageInpaint{Raster(90, 90), mask, "add rust here"};
  ScriptedTuner echo({"A rust patch, approximately 30 mm across, located in the top-left region of the fastener."});
  const auto tuned = tune_prompt(r, library(), echo);
  CHECK(echo.last_user == "add rust here\nMarked region: top-left.");
  CHECK(tuned.original == "add rust here");
  REQUIRE(tuned.attributes.location);
  CHECK(*tuned.attributes.location == BBox{0, 0, 20.0 / 90, 20.0 / 90});

  OfflineTemplateTuner offline(library());
  CHECK(tune_prompt(r, library(), offline).refined_text ==
        "A rust patch, approximately 30 mm across, located in the top-left region of the fastener, with flaking "
        "orange-brown oxide scale.");
}

TEST_CASE("mask bounds") {
  CHECK_FALSE(mask_bounds(Mask(4, 4)));
  Mask m(4, 2);
  m.set(1, 1, true);
  m.set(2, 1, true);
  CHECK(*mask_bounds(m) == BBox{0.25, 0.5, 0.75, 1.0});
}

TEST_CASE("extract_attributes") {
  const auto reference = extract_attributes(
      "A transverse crack, approximately 2 inches long, located on the head of the rail, with slight rust "
      "discoloration around the edges.");
  CHECK(reference.defect_type == DefectType::crack);
  CHECK(reference.orientation == Orientation::transverse);
  REQUIRE(reference.size);
  CHECK(*reference.size == DefectSize{2, SizeUnit::inch});
  CHECK(reference.component == "head of the rail");
  CHECK(reference.color_notes == "slight rust discoloration around the edges");

  const auto wear = extract_attributes("wear, 3 mm, longitudinal");
  CHECK(wear.defect_type == DefectType::wear);
  CHECK(*wear.size == DefectSize{3, SizeUnit::mm});
  CHECK(wear.orientation == Orientation::longitudinal);
  CHECK_FALSE(wear.location);
  CHECK_FALSE(wear.color_notes);

  CHECK(code_of([] { extract_attributes("a photo of a sunny beach"); }) == ErrorCode::NoDefectFound);
}

TEST_CASE("tuner failure handling") {
  SUBCASE("empty completion twice is untunable after one retry") {
    ScriptedTuner empty({"", ""});
    CHECK(code_of([&] { tune_prompt(prompt("crack"), library(), empty); }) == ErrorCode::UntunablePrompt);
    CHECK(empty.calls == 2);
  }
  SUBCASE("a good second answer is accepted") {
    ScriptedTuner flaky({"sure!", "A crack, approximately 3 mm long, located on the sleeper."});
    const auto tuned = tune_prompt(prompt("crack"), library(), flaky);
    CHECK(flaky.calls == 2);
    CHECK(tuned.prompt_tokens == 6);
    CHECK(tuned.attributes.orientation == Orientation::transverse);  // template default
  }
  SUBCASE("unknown defect with the offline tuner") {
    OfflineTemplateTuner tuner(library());
    CHECK(code_of([&] { tune_prompt(prompt("a sunny beach"), library(), tuner); }) == ErrorCode::UntunablePrompt);
  }
}

TEST_CASE("remote chat tuner against the stub server") {
  testing::StubModelServer stub;
  ::setenv("TMD_TEST_TUNER_TOKEN", "s3cret", 1);
  RemoteTunerConfig cfg;
  cfg.endpoint.http.base_url = stub.base_url();
  cfg.endpoint.http.bearer_token = token_from_env("TMD_TEST_TUNER_TOKEN");
  cfg.endpoint.http.timeout = std::chrono::milliseconds(5000);
  cfg.endpoint.model = "tuner-ft";
  RemoteChatTuner tuner(cfg);

  stub.set_chat_reply([](const nlohmann::json&) {
    return std::string("A transverse crack, approximately 2 inches long, located on the head of the rail.");
  });
  stub.set_usage(40, 17);
  const auto tuned = tune_prompt(prompt("crack on the rail"), library(), tuner);
  CHECK(tuned.prompt_tokens == 40);
  CHECK(tuned.completion_tokens == 17);
  CHECK(stub.chat_calls() == 1);
  CHECK(stub.last_authorization() == "Bearer s3cret");
  const auto req = stub.last_chat_request();
  CHECK(req["model"] == "tuner-ft");
  CHECK(req["messages"][0]["role"] == "system");
  CHECK(req["messages"][1]["content"] == "crack on the rail");

  SUBCASE("empty content twice") {
    stub.set_chat_mode(testing::StubModelServer::Mode::empty_content);
    CHECK(code_of([&] { tune_prompt(prompt("crack"), library(), tuner); }) == ErrorCode::UntunablePrompt);
    CHECK(stub.chat_calls() == 3);
  }
  SUBCASE("server errors are retried once, then unavailable") {
    stub.set_chat_mode(testing::StubModelServer::Mode::error500);
    CHECK(code_of([&] { tune_prompt(prompt("crack"), library(), tuner); }) == ErrorCode::BackendUnavailable);
    CHECK(stub.chat_calls() == 3);
  }
  SUBCASE("4xx is not retried") {
    stub.set_chat_mode(testing::StubModelServer::Mode::error400);
    CHECK(code_of([&] { tune_prompt(prompt("crack"), library(), tuner); }) == ErrorCode::BackendUnavailable);
    CHECK(stub.chat_calls() == 2);
  }
  SUBCASE("a single transient failure is absorbed by the retry") {
    stub.fail_next_chat_calls(1);
    CHECK_NOTHROW(tune_prompt(prompt("crack"), library(), tuner));
    CHECK(stub.chat_calls() == 3);
  }
}
