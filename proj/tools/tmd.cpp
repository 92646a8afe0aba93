#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "tmd/dataset_forge.hpp"
#include "tmd/png_codec.hpp"
#include "tmd/service.hpp"
#include "tmd/sus_eval.hpp"
#include "tmd/text.hpp"

#ifndef TMD_DATA_DIR
#define TMD_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

tmd::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw tmd::Error(tmd::ErrorCode::IoFailure, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

tmd::AppConfig make_config(const std::string& config_path, const std::string& data_dir, const std::string& out_dir) {
  if (!config_path.empty()) {
    auto c = tmd::load_config(config_path);
    if (!out_dir.empty()) {
      c.artifact_dir = fs::path(out_dir) / "artifacts";
      c.dataset_dir = fs::path(out_dir) / "datasets";
      c.meter_file = fs::path(out_dir) / "meters.jsonl";
    }
    return c;
  }
  return tmd::offline_config(data_dir, out_dir.empty() ? "out" : out_dir);
}

std::vector<tmd::ScenarioKind> parse_scenarios(const std::string& list) {
  if (list == "all") {
    return {tmd::ScenarioKind::LibrarySelect, tmd::ScenarioKind::CreativePrompt, tmd::ScenarioKind::ImageInpaint};
  }
  std::vector<tmd::ScenarioKind> out;
  for (const auto& name : tmd::split(list, ',')) {
    const auto k = tmd::parse_scenario_kind(tmd::trim(name));
    if (!k) throw CLI::ValidationError("--scenarios", "unknown scenario " + name);
    out.push_back(*k);
  }
  return out;
}

tmd::ChatEndpoint chat_endpoint(const std::string& url, const std::string& model, const std::string& token_env) {
  tmd::ChatEndpoint e;
  e.http.base_url = url;
  e.http.bearer_token = tmd::token_from_env(token_env);
  e.model = model;
  return e;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Defect texture generation engine"};
  app.require_subcommand(1);

  std::string data_dir = TMD_DATA_DIR;
  std::string config_path;
  std::string out_dir;

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", config_path, "Config file (JSON)")->required()->check(CLI::ExistingFile);

  // generate
  auto* gen = app.add_subcommand("generate", "Run one generation and print the response");
  std::string scenario = "prompt";
  std::string material, defect, text, image_path, mask_path, instruction, out_png;
  std::optional<std::uint64_t> seed;
  gen->add_option("--scenario", scenario)->check(CLI::IsMember({"library", "prompt", "inpaint"}));
  gen->add_option("--material", material);
  gen->add_option("--defect", defect);
  gen->add_option("--text", text);
  gen->add_option("--image", image_path)->check(CLI::ExistingFile);
  gen->add_option("--mask", mask_path)->check(CLI::ExistingFile);
  gen->add_option("--instruction", instruction);
  gen->add_option("--seed", seed);
  gen->add_option("--config", config_path);
  gen->add_option("--data-dir", data_dir);
  gen->add_option("--out-dir", out_dir);
  gen->add_option("--save", out_png, "Also copy the artifact here");

  // dataset build
  auto* dataset = app.add_subcommand("dataset", "Instruction dataset tools");
  dataset->require_subcommand(1);
  auto* build = dataset->add_subcommand("build", "Caption images and forge a JSONL dataset");
  std::string images_dir, dataset_out, backend = "offline", captions_file, remote_url, remote_model, token_env;
  tmd::ForgeConfig forge;
  build->add_option("--images", images_dir)->required()->check(CLI::ExistingDirectory);
  build->add_option("--k", forge.k);
  build->add_option("--seed", forge.seed);
  build->add_option("--max-attempts-factor", forge.max_attempts_factor);
  build->add_option("--template", forge.caption_template_id);
  build->add_option("--out", dataset_out)->required();
  build->add_option("--backend", backend)->check(CLI::IsMember({"offline", "remote"}));
  build->add_option("--captions", captions_file, "Offline caption table (JSON)");
  build->add_option("--url", remote_url, "Remote chat endpoint base URL");
  build->add_option("--model", remote_model);
  build->add_option("--token-env", token_env, "Environment variable holding the bearer token");
  auto* validate_ds = dataset->add_subcommand("validate", "Import a dataset file and report its size");
  std::string validate_path;
  validate_ds->add_option("file", validate_path)->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Run every scenario repeatedly and report meters");
  int runs = 50;
  std::string scenarios = "all", mode = "offline";
  bool bench_json = false;
  bench_cmd->add_option("--runs", runs)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--scenarios", scenarios);
  bench_cmd->add_option("--mode", mode)->check(CLI::IsMember({"offline", "remote"}));
  bench_cmd->add_option("--config", config_path);
  bench_cmd->add_option("--data-dir", data_dir);
  bench_cmd->add_option("--out-dir", out_dir);
  bench_cmd->add_flag("--json", bench_json);

  // sus score
  auto* sus = app.add_subcommand("sus", "Usability questionnaire scoring");
  sus->require_subcommand(1);
  auto* score = sus->add_subcommand("score", "Score a CSV of responses");
  std::string sus_input, by = "scenario";
  bool sus_json = false;
  score->add_option("--input", sus_input)->required()->check(CLI::ExistingFile);
  score->add_option("--by", by)->check(CLI::IsMember({"scenario", "platform", "both"}));
  score->add_flag("--json", sus_json);

  // report
  auto* report = app.add_subcommand("report", "Latency, token and cost summary of a meter file");
  std::string meters_path, rates_path = std::string(TMD_DATA_DIR) + "/rate_card.json";
  report->add_option("--meters", meters_path)->required()->check(CLI::ExistingFile);
  report->add_option("--rates", rates_path)->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      const auto config = tmd::load_config(config_path);
      auto pipeline = tmd::Pipeline::from_config(config);
      tmd::Server server(*pipeline);
      const int port = server.bind(config.listen_host, config.listen_port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << config.listen_host << ":" << port << "\n";
      server.listen();
      g_server = nullptr;
      return 0;
    }

    if (*gen) {
      const auto config = make_config(config_path, data_dir, out_dir);
      auto pipeline = tmd::Pipeline::from_config(config);
      tmd::ScenarioRequest request;
      request.seed = seed;
      if (scenario == "library") {
        request.payload = tmd::LibrarySelect{material, defect};
      } else if (scenario == "prompt") {
        request.payload = tmd::CreativePrompt{text};
      } else {
        tmd::ImageInpaint payload;
        if (!image_path.empty()) payload.image = tmd::decode_png(read_file(image_path)).image;
        if (!mask_path.empty()) payload.mask = tmd::Mask::from_raster(tmd::decode_png(read_file(mask_path)).image);
        payload.instruction = instruction;
        request.payload = std::move(payload);
      }
      const auto response = pipeline->handle_generate(std::move(request));
      if (!out_png.empty()) fs::copy_file(response.artifact_path, out_png, fs::copy_options::overwrite_existing);
      json j = response.to_json(false);
      j["artifact_path"] = response.artifact_path.string();
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*build) {
      std::unique_ptr<tmd::CaptionBackend> captioner;
      std::unique_ptr<tmd::RephraseBackend> rephraser;
      if (backend == "offline") {
        const fs::path table = captions_file.empty() ? fs::path(data_dir) / "fixtures" / "captions.json"
                                                     : fs::path(captions_file);
        captioner = std::make_unique<tmd::OfflineCaptionTable>(tmd::OfflineCaptionTable::load(table));
        rephraser = std::make_unique<tmd::OfflineRephraser>();
      } else {
        if (remote_url.empty()) throw CLI::ValidationError("--url", "required with --backend remote");
        captioner = std::make_unique<tmd::RemoteCaptioner>(chat_endpoint(remote_url, remote_model, token_env));
        rephraser = std::make_unique<tmd::RemoteRephraser>(chat_endpoint(remote_url, remote_model, token_env));
      }
      const auto ds = tmd::forge_dataset(tmd::list_images(images_dir), forge, *captioner, *rephraser,
                                         tmd::dataset_timestamp());
      tmd::export_dataset(ds, dataset_out);
      std::cout << "wrote " << ds.entries.size() << " samples to " << dataset_out << "\n";
      return 0;
    }

    if (*validate_ds) {
      const auto ds = tmd::import_dataset(validate_path);
      std::cout << ds.entries.size() << " samples, k=" << ds.forge_config.k << "\n";
      return 0;
    }

    if (*bench_cmd) {
      if (mode == "remote" && config_path.empty()) {
        throw CLI::ValidationError("--config", "remote mode needs a config naming the backends");
      }
      const auto config = mode == "offline" && config_path.empty()
                              ? tmd::offline_config(data_dir, out_dir.empty() ? "out/bench" : out_dir)
                              : make_config(config_path, data_dir, out_dir);
      auto pipeline = tmd::Pipeline::from_config(config);
      const auto result = tmd::bench(*pipeline, parse_scenarios(scenarios), runs);
      if (bench_json) {
        std::cout << result.to_json().dump(2) << "\n";
      } else {
        std::cout << result.format_table() << "meters: " << result.meter_file.string() << "\n";
      }
      const bool incomplete = std::any_of(result.scenarios.begin(), result.scenarios.end(),
                                          [](const auto& s) { return s.incomplete; });
      return incomplete ? 3 : 0;
    }

    if (*score) {
      std::ifstream in(sus_input);
      const auto responses = tmd::read_sus_csv(in);
      const auto grouping = by == "platform" ? tmd::SusGrouping::platform
                            : by == "both"   ? tmd::SusGrouping::scenario_platform
                                             : tmd::SusGrouping::scenario;
      const auto rep = tmd::aggregate_sus(responses, grouping);
      std::cout << (sus_json ? tmd::to_json(rep).dump(2) + "\n" : tmd::format_table(rep));
      return 0;
    }

    if (*report) {
      const auto records = tmd::MeterStore::load(meters_path);
      const auto rates = tmd::RateCard::load(rates_path);
      std::cout << tmd::metrics_json(records, rates).dump(2) << "\n";
      return 0;
    }
  } catch (const tmd::StageError& e) {
    std::cerr << "error: " << e.to_json().dump() << "\n";
    return 2;
  } catch (const tmd::Error& e) {
    std::cerr << "error [" << tmd::to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
