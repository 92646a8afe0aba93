#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tmd/core_model.hpp"
#include "tmd/error.hpp"
#include "tmd/metering.hpp"
#include "tmd/model_gateway.hpp"
#include "tmd/prompt_tuner.hpp"
#include "tmd/texture_processor.hpp"

namespace tmd {

enum class BackendMode { offline, remote };

struct BackendEntry {
  std::string backend_id;
  BackendKind kind = BackendKind::TextToImage;
  BackendMode mode = BackendMode::offline;
  std::string base_url;
  std::string path = "/v1/images";
  std::string auth_token_env;
  std::size_t max_in_flight = 0;  // 0 = unlimited; remote entries default to 2
  double timeout_s = 120.0;
  int retries = 1;
};

struct TunerEntry {
  std::string backend_id = "offline-tuner";
  BackendMode mode = BackendMode::offline;
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string auth_token_env;
  std::size_t max_in_flight = 4;
  double timeout_s = 120.0;
  int retries = 1;
};

enum class SeedPolicy { fixed, random };

/// Service configuration. Relative paths are resolved against the config file's directory.
struct AppConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::vector<BackendEntry> backends;
  TunerEntry tuner;
  std::filesystem::path rate_card_path;
  std::filesystem::path library_path;
  std::filesystem::path dataset_dir;
  std::filesystem::path artifact_dir;
  std::filesystem::path meter_file;
  int target_size = 512;
  SeedPolicy seed_policy = SeedPolicy::fixed;
  std::uint64_t default_seed = 0;
  std::size_t max_concurrency = 16;
  std::size_t inline_max_bytes = 1 << 20;

  /// Throws Error(ConfigInvalid) naming the offending field path.
  void validate() const;
};

/// Throws Error(ConfigInvalid) with a field path such as "backends[1].kind".
AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
AppConfig load_config(const std::filesystem::path& path);

/// All-offline configuration writing under `out_dir`, reading data files from `data_dir`.
AppConfig offline_config(const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

/// Pipeline failure tagged with the stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& message, int http_status)
      : Error(code, message), stage_(std::move(stage)), http_status_(http_status) {}
  const std::string& stage() const noexcept { return stage_; }
  int http_status() const noexcept { return http_status_; }
  nlohmann::json to_json() const;

 private:
  std::string stage_;
  int http_status_;
};

struct GenerateResponse {
  std::string request_id;
  std::string artifact_id;  // SHA-256 of the PNG bytes
  std::filesystem::path artifact_path;
  std::vector<std::uint8_t> artifact_bytes;
  std::string original_prompt;
  std::string tuned_prompt;
  MeterRecord meter;
  CostBreakdown cost;

  nlohmann::json to_json(bool inline_artifact) const;
};

/// validate -> tune -> route -> generate -> standardize -> persist -> meter.
class Pipeline {
 public:
  Pipeline(AppConfig config, std::shared_ptr<TunerBackend> tuner, BackendRegistry registry,
           DefectLibrary library, RateCard rates);

  /// Builds backends, loads the library and rate card, creates output directories.
  static std::unique_ptr<Pipeline> from_config(const AppConfig& config);

  /// Runs one request end to end. Throws StageError.
  GenerateResponse handle_generate(ScenarioRequest request);

  const AppConfig& config() const noexcept { return config_; }
  const DefectLibrary& library() const noexcept { return library_; }
  const RateCard& rates() const noexcept { return rates_; }
  MeterStore& meters() noexcept { return meters_; }
  std::filesystem::path artifact_file(const std::string& artifact_id) const;
  std::filesystem::path provenance_file(const std::string& request_id) const;

 private:
  std::uint64_t resolve_seed(const std::optional<std::uint64_t>& requested);
  void claim_request_id(const std::string& id);

  AppConfig config_;
  std::shared_ptr<TunerBackend> tuner_;
  BackendRegistry registry_;
  DefectLibrary library_;
  RateCard rates_;
  StandardizationTarget target_;
  MeterStore meters_;

  std::mutex ids_mu_;
  std::set<std::string> request_ids_;
  std::mutex persist_mu_;
};

/// Builds the full metrics document served at /v1/metrics.
nlohmann::json metrics_json(const std::vector<MeterRecord>& records, const RateCard& rates);

/// HTTP front end over a Pipeline.
class Server {
 public:
  explicit Server(Pipeline& pipeline);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds (port 0 picks a free port). Throws Error(AddressInUse).
  int bind(const std::string& host, int port);
  /// Serves until stop(); in-flight requests are drained before returning.
  void listen();
  /// bind + listen on a background thread.
  int start_background(const std::string& host, int port);
  void stop();
  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

// ---- bench ------------------------------------------------------------------

struct BenchScenarioReport {
  ScenarioKind scenario = ScenarioKind::LibrarySelect;
  std::size_t requested = 0;
  std::size_t completed = 0;
  std::size_t failures = 0;
  bool incomplete = false;
  LatencyStats latency;
  TokenStats tokens;
  CostBreakdown cost;
  std::vector<std::string> request_ids;
};

struct BenchReport {
  std::vector<BenchScenarioReport> scenarios;
  std::filesystem::path meter_file;
  std::size_t total_completed() const;
  nlohmann::json to_json() const;
  std::string format_table() const;
};

/// Runs `runs` generations per scenario. A scenario stops after 3 consecutive
/// failures and is flagged incomplete.
BenchReport bench(Pipeline& pipeline, const std::vector<ScenarioKind>& scenarios, int runs);

/// Deterministic request for run `index` of a scenario, as used by bench.
ScenarioRequest bench_request(const DefectLibrary& library, ScenarioKind scenario, int index);

}  // namespace tmd
