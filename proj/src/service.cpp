#include "tmd/service.hpp"

#include <httplib.h>

#include <chrono>
#include <fstream>
#include <random>
#include <regex>
#include <thread>

#include "tmd/digest.hpp"
#include "tmd/png_codec.hpp"
#include "tmd/sus_eval.hpp"
#include "tmd/text.hpp"

namespace tmd {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- config -----------------------------------------------------------------

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::ConfigInvalid, field + ": " + what);
}

template <typename T>
T field_or(const json& obj, const char* key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(path + key, "wrong type");
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

BackendMode parse_mode(const std::string& s, const std::string& field) {
  if (s == "offline") return BackendMode::offline;
  if (s == "remote") return BackendMode::remote;
  config_error(field, "must be \"offline\" or \"remote\"");
}

}  // namespace

AppConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) config_error("$", "config must be a JSON object");
  AppConfig c;
  const std::string listen = field_or<std::string>(j, "listen", "", "127.0.0.1:8080");
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) config_error("listen", "expected host:port");
  c.listen_host = listen.substr(0, colon);
  try {
    c.listen_port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    config_error("listen", "port is not a number");
  }

  if (!j.contains("backends") || !j["backends"].is_array()) config_error("backends", "required array");
  for (std::size_t i = 0; i < j["backends"].size(); ++i) {
    const json& b = j["backends"][i];
    const std::string p = "backends[" + std::to_string(i) + "].";
    if (!b.is_object()) config_error("backends[" + std::to_string(i) + "]", "must be an object");
    BackendEntry e;
    e.backend_id = field_or<std::string>(b, "backend_id", p, "");
    if (e.backend_id.empty()) config_error(p + "backend_id", "required");
    const auto kind = parse_backend_kind(field_or<std::string>(b, "kind", p, ""));
    if (!kind) config_error(p + "kind", "must be \"text_to_image\" or \"image_edit\"");
    e.kind = *kind;
    e.mode = parse_mode(field_or<std::string>(b, "mode", p, "offline"), p + "mode");
    e.base_url = field_or<std::string>(b, "base_url", p, "");
    e.path = field_or<std::string>(b, "path", p, e.path);
    e.auth_token_env = field_or<std::string>(b, "auth_token_env", p, "");
    e.max_in_flight = field_or<std::size_t>(b, "max_in_flight", p, e.mode == BackendMode::remote ? 2 : 0);
    e.timeout_s = field_or<double>(b, "timeout_s", p, e.timeout_s);
    e.retries = field_or<int>(b, "retries", p, e.retries);
    if (e.mode == BackendMode::remote && e.base_url.empty()) config_error(p + "base_url", "required for remote mode");
    c.backends.push_back(std::move(e));
  }

  if (j.contains("tuner")) {
    const json& t = j["tuner"];
    const std::string p = "tuner.";
    c.tuner.backend_id = field_or<std::string>(t, "backend_id", p, c.tuner.backend_id);
    c.tuner.mode = parse_mode(field_or<std::string>(t, "mode", p, "offline"), p + "mode");
    c.tuner.base_url = field_or<std::string>(t, "base_url", p, "");
    c.tuner.path = field_or<std::string>(t, "path", p, c.tuner.path);
    c.tuner.model = field_or<std::string>(t, "model", p, "");
    c.tuner.auth_token_env = field_or<std::string>(t, "auth_token_env", p, "");
    c.tuner.max_in_flight = field_or<std::size_t>(t, "max_in_flight", p, c.tuner.max_in_flight);
    c.tuner.timeout_s = field_or<double>(t, "timeout_s", p, c.tuner.timeout_s);
    c.tuner.retries = field_or<int>(t, "retries", p, c.tuner.retries);
    if (c.tuner.mode == BackendMode::remote && c.tuner.base_url.empty()) {
      config_error(p + "base_url", "required for remote mode");
    }
  }

  c.rate_card_path = resolve(base_dir, field_or<std::string>(j, "rate_card", "", ""));
  c.library_path = resolve(base_dir, field_or<std::string>(j, "library", "", ""));
  c.dataset_dir = resolve(base_dir, field_or<std::string>(j, "dataset_dir", "", "out/datasets"));
  c.artifact_dir = resolve(base_dir, field_or<std::string>(j, "artifact_dir", "", "out/artifacts"));
  c.meter_file = resolve(base_dir, field_or<std::string>(j, "meter_file", "", "out/meters.jsonl"));
  c.target_size = field_or<int>(j, "target_size", "", c.target_size);
  c.max_concurrency = field_or<std::size_t>(j, "max_concurrency", "", c.max_concurrency);
  c.inline_max_bytes = field_or<std::size_t>(j, "inline_max_bytes", "", c.inline_max_bytes);
  if (j.contains("seed_policy")) {
    const json& s = j["seed_policy"];
    const auto mode = field_or<std::string>(s, "mode", "seed_policy.", "fixed");
    if (mode == "fixed") c.seed_policy = SeedPolicy::fixed;
    else if (mode == "random") c.seed_policy = SeedPolicy::random;
    else config_error("seed_policy.mode", "must be \"fixed\" or \"random\"");
    c.default_seed = field_or<std::uint64_t>(s, "seed", "seed_policy.", 0);
  }
  c.validate();
  return c;
}

void AppConfig::validate() const {
  for (const BackendKind kind : {BackendKind::TextToImage, BackendKind::ImageEdit}) {
    const bool bound = std::any_of(backends.begin(), backends.end(),
                                   [kind](const BackendEntry& b) { return b.kind == kind; });
    if (!bound) config_error("backends", "no backend bound to " + std::string(to_string(kind)));
  }
  if (library_path.empty() || !fs::exists(library_path)) config_error("library", "file not found: " + library_path.string());
  if (rate_card_path.empty() || !fs::exists(rate_card_path)) {
    config_error("rate_card", "file not found: " + rate_card_path.string());
  }
  if (target_size != 256 && target_size != 512 && target_size != 1024) {
    config_error("target_size", "must be 256, 512 or 1024");
  }
  if (max_concurrency == 0) config_error("max_concurrency", "must be >= 1");
}

AppConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("config parse: ") + e.what());
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

AppConfig offline_config(const fs::path& data_dir, const fs::path& out_dir) {
  AppConfig c;
  BackendEntry t2i, edit;
  t2i.backend_id = "offline-t2i";
  edit.backend_id = "offline-edit";
  edit.kind = BackendKind::ImageEdit;
  c.backends = {t2i, edit};
  c.rate_card_path = data_dir / "rate_card.json";
  c.library_path = data_dir / "defect_library.json";
  c.dataset_dir = out_dir / "datasets";
  c.artifact_dir = out_dir / "artifacts";
  c.meter_file = out_dir / "meters.jsonl";
  c.validate();
  return c;
}

// ---- errors / responses -------------------------------------------------------

json StageError::to_json() const {
  return {{"error", {{"stage", stage_}, {"code", to_string(code())}, {"message", what()}}}};
}

json GenerateResponse::to_json(bool inline_artifact) const {
  json j{{"request_id", request_id},
         {"artifact_id", artifact_id},
         {"artifact_url", "/v1/artifacts/" + artifact_id},
         {"original_prompt", original_prompt},
         {"tuned_prompt", tuned_prompt},
         {"meter", meter},
         {"cost", tmd::to_json(cost)}};
  if (inline_artifact) j["artifact_b64"] = base64_encode(artifact_bytes);
  return j;
}

// ---- pipeline -----------------------------------------------------------------

namespace {

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::BackendUnavailable:
    case ErrorCode::NoBackendForKind:
      return 502;
    case ErrorCode::Timeout:
      return 504;
    case ErrorCode::DuplicateRequestId:
      return 409;
    case ErrorCode::IoFailure:
    case ErrorCode::UnknownBackendRate:
      return 500;
    default:
      return 422;
  }
}

template <typename F>
auto run_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.code(), e.what(), http_status_for(e.code()));
  } catch (const std::exception& e) {
    throw StageError(stage, ErrorCode::BackendUnavailable, e.what(), 500);
  }
}

void write_file_atomically(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const fs::path tmp = path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw Error(ErrorCode::IoFailure, "write failed on " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Creates output directories; returns the meter file path.
fs::path prepare_output(const AppConfig& config) {
  fs::create_directories(config.artifact_dir / "provenance");
  if (config.meter_file.has_parent_path()) fs::create_directories(config.meter_file.parent_path());
  return config.meter_file;
}

}  // namespace

Pipeline::Pipeline(AppConfig config, std::shared_ptr<TunerBackend> tuner, BackendRegistry registry,
                   DefectLibrary library, RateCard rates)
    : config_(std::move(config)),
      tuner_(std::move(tuner)),
      registry_(std::move(registry)),
      library_(std::move(library)),
      rates_(std::move(rates)),
      target_(StandardizationTarget::of(config_.target_size)),
      meters_(prepare_output(config_)) {
  for (const auto& r : meters_.snapshot()) request_ids_.insert(r.request_id);
}

std::unique_ptr<Pipeline> Pipeline::from_config(const AppConfig& config) {
  config.validate();
  DefectLibrary library = load_library(config.library_path);
  RateCard rates = RateCard::load(config.rate_card_path);

  BackendRegistry registry;
  for (std::size_t i = 0; i < config.backends.size(); ++i) {
    const auto& b = config.backends[i];
    if (!rates.rates.count(b.backend_id)) {
      config_error("backends[" + std::to_string(i) + "].backend_id", "no rate for " + b.backend_id + " in rate card");
    }
    if (registry.has(b.kind)) continue;  // first binding per kind wins
    std::shared_ptr<GenBackend> backend;
    if (b.mode == BackendMode::offline) {
      backend = std::make_shared<OfflineSynthesizer>(b.backend_id);
    } else {
      RemoteImageConfig rc;
      rc.backend_id = b.backend_id;
      rc.path = b.path;
      rc.endpoint.base_url = b.base_url;
      rc.endpoint.bearer_token = token_from_env(b.auth_token_env);
      rc.endpoint.timeout = std::chrono::milliseconds(static_cast<long>(b.timeout_s * 1000));
      rc.endpoint.retries = b.retries;
      backend = std::make_shared<RemoteImageBackend>(std::move(rc));
    }
    registry.bind(b.kind, std::move(backend), b.max_in_flight);
  }

  std::shared_ptr<TunerBackend> tuner;
  if (config.tuner.mode == BackendMode::offline) {
    tuner = std::make_shared<OfflineTemplateTuner>(library, config.tuner.backend_id);
  } else {
    RemoteTunerConfig tc;
    tc.backend_id = config.tuner.backend_id;
    tc.endpoint.http.base_url = config.tuner.base_url;
    tc.endpoint.http.bearer_token = token_from_env(config.tuner.auth_token_env);
    tc.endpoint.http.timeout = std::chrono::milliseconds(static_cast<long>(config.tuner.timeout_s * 1000));
    tc.endpoint.http.retries = config.tuner.retries;
    tc.endpoint.path = config.tuner.path;
    tc.endpoint.model = config.tuner.model;
    tc.max_in_flight = config.tuner.max_in_flight;
    tuner = std::make_shared<RemoteChatTuner>(std::move(tc));
  }
  return std::make_unique<Pipeline>(config, std::move(tuner), std::move(registry), std::move(library),
                                    std::move(rates));
}

fs::path Pipeline::artifact_file(const std::string& artifact_id) const {
  return config_.artifact_dir / (artifact_id + ".png");
}

fs::path Pipeline::provenance_file(const std::string& request_id) const {
  return config_.artifact_dir / "provenance" / (request_id + ".json");
}

std::uint64_t Pipeline::resolve_seed(const std::optional<std::uint64_t>& requested) {
  if (requested) return *requested;
  if (config_.seed_policy == SeedPolicy::fixed) return config_.default_seed;
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  return rng();
}

void Pipeline::claim_request_id(const std::string& id) {
  std::lock_guard lock(ids_mu_);
  if (!request_ids_.insert(id).second) {
    throw Error(ErrorCode::DuplicateRequestId, "request_id " + id + " was already used");
  }
}

GenerateResponse Pipeline::handle_generate(ScenarioRequest request) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto since = [&](Clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::microseconds>(t - t0).count();
  };
  std::vector<StageTiming> stages;
  auto timed = [&](const std::string& name, auto&& body) {
    const auto start = Clock::now();
    auto result = run_stage(name, body);
    stages.push_back({name, since(start), since(Clock::now())});
    return result;
  };

  if (request.request_id.empty()) request.request_id = make_ulid();
  const ScenarioKind scenario = request.kind();

  timed("validate", [&] {
    validate_request(request);
    if (const auto* lib = std::get_if<LibrarySelect>(&request.payload)) {
      lookup_defect(library_, lib->material_id, lib->defect_id);
    }
    claim_request_id(request.request_id);
    return 0;
  });
  const std::uint64_t seed = resolve_seed(request.seed);

  const TunedPrompt tuned = timed("tune", [&] { return tune_prompt(request, library_, *tuner_); });
  const BackendKind kind = timed("route", [&] { return route(scenario); });

  GenRequest gen;
  gen.prompt = tuned.refined_text;
  gen.seed = seed;
  if (const auto* inpaint = std::get_if<ImageInpaint>(&request.payload)) {
    gen.base_image = inpaint->image;
    gen.mask = inpaint->mask;
    gen.out_width = inpaint->image.width();
    gen.out_height = inpaint->image.height();
  } else {
    gen.out_width = target_.size();
    gen.out_height = target_.size();
  }
  GenResult generated = timed("generate", [&] { return tmd::generate(gen, kind, registry_); });

  TextureArtifact artifact = timed("standardize", [&] { return standardize(generated.image, target_); });

  MeterRecord meter;
  meter.request_id = request.request_id;
  meter.scenario = scenario;
  meter.backend_id = generated.meter.backend_id;
  meter.prompt_tokens = tuned.prompt_tokens;
  meter.completion_tokens = tuned.completion_tokens;

  artifact.provenance = {request.request_id, scenario,     meter.backend_id, tuned.original,
                         tuned.refined_text, seed,         meter};

  GenerateResponse response;
  response.request_id = request.request_id;
  response.original_prompt = tuned.original;
  response.tuned_prompt = tuned.refined_text;

  timed("persist", [&] {
    response.artifact_bytes = encode_artifact(artifact, ProvenanceEmbed::reproducible);
    response.artifact_id = sha256_hex(response.artifact_bytes);
    response.artifact_path = artifact_file(response.artifact_id);
    {
      std::lock_guard lock(persist_mu_);
      if (!fs::exists(response.artifact_path)) write_file_atomically(response.artifact_path, response.artifact_bytes);
    }
    return 0;
  });

  const auto t_end = Clock::now();
  meter.artifact_id = response.artifact_id;
  meter.stages = stages;
  meter.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t_end - t0).count();
  artifact.provenance.meter = meter;

  timed("meter", [&] {
    response.cost = estimate_cost({meter}, rates_);
    json prov_doc = to_json(artifact.provenance);
    prov_doc["artifact_id"] = response.artifact_id;
    const std::string prov = prov_doc.dump(2);
    const std::vector<std::uint8_t> prov_bytes(prov.begin(), prov.end());
    write_file_atomically(provenance_file(request.request_id), prov_bytes);
    meters_.append(meter);
    return 0;
  });
  response.meter = meter;
  return response;
}

json metrics_json(const std::vector<MeterRecord>& records, const RateCard& rates) {
  json cost = json::object();
  std::map<ScenarioKind, std::vector<MeterRecord>> by_scenario;
  for (const auto& r : records) by_scenario[r.scenario].push_back(r);
  CostBreakdown total;
  for (const auto& [kind, rs] : by_scenario) {
    CostBreakdown c;
    try {
      c = estimate_cost(rs, rates);
    } catch (const Error&) {
      continue;
    }
    cost[std::string(to_string(kind))] = to_json(c);
    total += c;
  }
  cost["total"] = to_json(total);
  json tokens = json::object();
  for (const auto& [kind, t] : token_report(records)) {
    tokens[std::string(to_string(kind))] = {{"n", t.n},
                                            {"mean_prompt", t.mean_prompt},
                                            {"mean_completion", t.mean_completion},
                                            {"mean_total", t.mean_total},
                                            {"min_total", t.min_total},
                                            {"max_total", t.max_total}};
  }
  return {{"latency", to_json(latency_report(records))}, {"tokens", tokens}, {"cost", cost}};
}

// ---- HTTP server --------------------------------------------------------------

struct Server::Impl {
  explicit Impl(Pipeline& p) : pipeline(p) {}
  Pipeline& pipeline;
  httplib::Server http;
  std::thread thread;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& stage, const std::string& code,
                const std::string& message, const json& extra = json::object()) {
  json err{{"stage", stage}, {"code", code}, {"message", message}};
  err.update(extra);
  send_json(res, status, json{{"error", err}});
}

/// Parses the body as JSON or answers 400 with the byte position of the error.
std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    send_error(res, 400, "parse", "MalformedJson", e.what(), {{"position", e.byte}});
    return std::nullopt;
  }
}

std::optional<std::uint64_t> optional_seed(const json& j) {
  if (!j.contains("seed") || j["seed"].is_null()) return std::nullopt;
  if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
    throw Error(ErrorCode::InvalidRequest, "seed must be an unsigned integer");
  }
  const auto v = j["seed"].get<std::int64_t>();
  if (v < 0) throw Error(ErrorCode::InvalidRequest, "seed must be an unsigned integer");
  return j["seed"].get<std::uint64_t>();
}

std::string string_field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || j[key].is_null()) return {};
  if (!j[key].is_string()) throw Error(ErrorCode::InvalidRequest, std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

void run_generate(Pipeline& pipeline, const httplib::Request& req, httplib::Response& res,
                  const std::function<ScenarioRequest()>& build) {
  ScenarioRequest request;
  try {
    request = build();
  } catch (const Error& e) {
    send_error(res, 422, "validate", std::string(to_string(e.code())), e.what());
    return;
  }
  try {
    const auto response = pipeline.handle_generate(std::move(request));
    const bool want_inline = req.has_param("inline") && req.get_param_value("inline") != "0" &&
                             response.artifact_bytes.size() <= pipeline.config().inline_max_bytes;
    send_json(res, 200, response.to_json(want_inline));
  } catch (const StageError& e) {
    send_json(res, e.http_status(), e.to_json());
  }
}

}  // namespace

Server::Server(Pipeline& pipeline) : impl_(std::make_unique<Impl>(pipeline)) {
  auto& http = impl_->http;
  Pipeline& p = pipeline;
  const std::size_t workers = p.config().max_concurrency;
  http.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  http.set_payload_max_length(64u << 20);
  // the library default sets SO_REUSEPORT, which lets a second server share the port
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  http.Get("/v1/library", [&p](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, json(p.library()));
  });

  http.Get("/v1/metrics", [&p](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, metrics_json(p.meters().snapshot(), p.rates()));
  });

  http.Get(R"(/v1/artifacts/([0-9a-f]{64})(?:\.png)?)", [&p](const httplib::Request& req, httplib::Response& res) {
    const auto path = p.artifact_file(req.matches[1].str());
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      send_error(res, 404, "artifact", "NotFound", "no artifact " + req.matches[1].str());
      return;
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    res.set_content(std::move(bytes), "image/png");
  });

  http.Post("/v1/generate/library", [&p](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req, res);
    if (!body) return;
    run_generate(p, req, res, [&] {
      ScenarioRequest r;
      r.request_id = string_field(*body, "request_id");
      r.seed = optional_seed(*body);
      r.payload = LibrarySelect{string_field(*body, "material_id"), string_field(*body, "defect_id")};
      return r;
    });
  });

  http.Post("/v1/generate/prompt", [&p](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req, res);
    if (!body) return;
    run_generate(p, req, res, [&] {
      ScenarioRequest r;
      r.request_id = string_field(*body, "request_id");
      r.seed = optional_seed(*body);
      r.payload = CreativePrompt{string_field(*body, "text")};
      return r;
    });
  });

  http.Post("/v1/generate/inpaint", [&p](const httplib::Request& req, httplib::Response& res) {
    run_generate(p, req, res, [&] {
      if (!req.is_multipart_form_data()) {
        throw Error(ErrorCode::InvalidRequest, "inpaint expects multipart/form-data");
      }
      ScenarioRequest r;
      ImageInpaint payload;
      if (req.has_file("image")) {
        const auto& content = req.get_file_value("image").content;
        if (!content.empty()) {
          payload.image = decode_png(std::span(reinterpret_cast<const std::uint8_t*>(content.data()), content.size())).image;
        }
      }
      if (req.has_file("mask")) {
        const auto& content = req.get_file_value("mask").content;
        if (!content.empty()) {
          payload.mask = Mask::from_raster(
              decode_png(std::span(reinterpret_cast<const std::uint8_t*>(content.data()), content.size())).image);
        }
      }
      if (req.has_file("instruction")) payload.instruction = req.get_file_value("instruction").content;
      if (req.has_file("request_id")) r.request_id = req.get_file_value("request_id").content;
      if (req.has_file("seed")) {
        const auto s = trim(req.get_file_value("seed").content);
        if (!s.empty()) {
          try {
            std::size_t used = 0;
            r.seed = std::stoull(s, &used);
            if (used != s.size() || s[0] == '-') throw std::invalid_argument("seed");
          } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidRequest, "seed must be an unsigned integer");
          }
        }
      }
      r.payload = std::move(payload);
      return r;
    });
  });

  http.Post("/v1/sus/score", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req, res);
    if (!body) return;
    try {
      if (!body->contains("responses") || !(*body)["responses"].is_array()) {
        throw Error(ErrorCode::InvalidScore, "body must contain a responses array");
      }
      std::vector<SUSResponse> responses;
      for (const auto& r : (*body)["responses"]) responses.push_back(sus_response_from_json(r));
      const auto by = body->value("by", std::string{"scenario"});
      SusGrouping grouping = SusGrouping::scenario;
      if (by == "platform") grouping = SusGrouping::platform;
      else if (by == "scenario,platform" || by == "both") grouping = SusGrouping::scenario_platform;
      else if (by != "scenario") throw Error(ErrorCode::InvalidScore, "by must be scenario, platform or both");
      send_json(res, 200, to_json(aggregate_sus(responses, grouping)));
    } catch (const Error& e) {
      send_error(res, 422, "sus", std::string(to_string(e.code())), e.what());
    }
  });

  http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send_error(res, 500, "server", "InternalError", what);
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = impl_->http.bind_to_any_port(host);
    if (port_ < 0) throw Error(ErrorCode::AddressInUse, "cannot bind " + host);
  } else {
    if (!impl_->http.bind_to_port(host, port)) {
      throw Error(ErrorCode::AddressInUse, "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  return port_;
}

void Server::listen() { impl_->http.listen_after_bind(); }

int Server::start_background(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->thread = std::thread([this] { listen(); });
  impl_->http.wait_until_ready();
  return bound;
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace tmd
