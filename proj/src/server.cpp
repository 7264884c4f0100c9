#include "autocab/server.hpp"

#include <chrono>
#include <cstdlib>

#include "autocab/error.hpp"

namespace autocab {

namespace {

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string_view wire_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::TaskNotFound: return "task_not_found";
    case ErrorCode::UnknownRegion: return "unknown_region";
    case ErrorCode::GeoMismatch: return "geo_mismatch";
    case ErrorCode::SessionInactive: return "session_inactive";
    case ErrorCode::SchemaViolation: return "bad_frame";
    case ErrorCode::ModalityViolation: return "bad_modalities";
    default: return "internal";
  }
}

}  // namespace

std::string resolve_trace_dir(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("AUTOCAB_TRACE_DIR"); env != nullptr && *env != '\0') return env;
  return "traces";
}

nlohmann::json error_frame(std::string_view code, std::string_view msg) {
  return {{"type", "err"}, {"code", code}, {"msg", msg}};
}

SessionHandler::SessionHandler(std::shared_ptr<const Assets> assets, ServerOptions options)
    : assets_(std::move(assets)), options_(std::move(options)) {
  last_activity_ = now();
}

double SessionHandler::now() const { return options_.clock ? options_.clock() : steady_seconds(); }

double SessionHandler::idle_for() const { return now() - last_activity_; }

nlohmann::json SessionHandler::hello() const {
  return {{"type", "hello"},
          {"proto", kProtocolVersion},
          {"engine", kEngineVersion},
          {"suite_version", assets_->suite.suite_version},
          {"kb_version", assets_->kb.kb_version()}};
}

std::vector<nlohmann::json> SessionHandler::handle(std::string_view line) {
  last_activity_ = now();
  auto frame = nlohmann::json::parse(line, nullptr, false);
  if (frame.is_discarded() || !frame.is_object()) return {error_frame("bad_frame", "not a JSON object")};
  if (!frame.contains("type") || !frame.at("type").is_string()) return {error_frame("bad_frame", "missing 'type'")};
  const auto type = frame.at("type").get<std::string>();
  try {
    if (type == "start") return {start(frame)};
    if (type == "act") return act(frame);
    if (type == "end") {
      if (!active()) return {error_frame("session_inactive", "no episode in progress")};
      return {*close(Termination::ClientEnd)};
    }
    if (type == "hello") return {hello()};
  } catch (const Error& e) {
    return {error_frame(wire_code(e.code()), e.what())};
  } catch (const nlohmann::json::exception& e) {
    return {error_frame("bad_frame", e.what())};
  }
  return {error_frame("unknown_type", "unknown frame type '" + type + "'")};
}

nlohmann::json SessionHandler::start(const nlohmann::json& frame) {
  if (active()) return error_frame("session_active", "end the current episode first");
  if (!frame.contains("template_id") || !frame.at("template_id").is_string()) {
    return error_frame("bad_frame", "start needs a string 'template_id'");
  }
  const auto& tmpl = assets_->suite.require(frame.at("template_id").get<std::string>());
  std::uint64_t seed = 0;
  if (frame.contains("seed")) {
    const auto& s = frame.at("seed");
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) return error_frame("bad_frame", "seed must be >= 0");
    seed = s.get<std::uint64_t>();
  }
  const RegionProfile* region = nullptr;
  if (frame.contains("region") && !frame.at("region").is_null()) {
    const auto id = frame.at("region").get<std::string>();
    region = assets_->kb.find(id);
    if (region == nullptr) return error_frame("unknown_region", "unknown region '" + id + "'");
    for (const auto& tag : tmpl.geo_requirements) {
      if (!region->has_tag(tag)) {
        return error_frame("geo_mismatch", "region '" + id + "' lacks tag '" + tag + "' needed by " + tmpl.template_id);
      }
    }
  } else {
    region = &choose_region(tmpl, assets_->kb);
  }
  ModalityConfig config;
  if (frame.contains("modalities")) {
    try {
      config = modality_config_from_json(frame.at("modalities"));
    } catch (const Error& e) {
      return error_frame("bad_modalities", e.what());
    }
  }

  auto inst = instantiate(tmpl, seed, *region);
  if (frame.contains("max_steps")) {
    const int m = frame.at("max_steps").get<int>();
    if (m <= 0) return error_frame("bad_frame", "max_steps must be > 0");
    inst.max_steps = m;
  }
  std::string variant = "client";
  std::string backend = "wire";
  if (frame.contains("agent") && frame.at("agent").is_object()) {
    variant = frame.at("agent").value("variant", variant);
    backend = frame.at("agent").value("backend", backend);
  }

  env_.emplace(assets_);
  auto obs = env_->reset(inst, config);
  recorder_.begin(*env_, obs, variant, backend);
  recorder_.trace().header.created_at = utc_now_iso();
  recording_ = true;
  return to_wire_json(obs, options_.include_png && config.screen);
}

std::vector<nlohmann::json> SessionHandler::act(const nlohmann::json& frame) {
  if (!active()) return {error_frame("session_inactive", "no episode in progress")};
  if (!frame.contains("action")) return {error_frame("bad_frame", "act needs an 'action'")};
  Action action;
  try {
    action = action_from_json(frame.at("action"));
  } catch (const Error& e) {
    action = InvalidAction{e.what(), frame.at("action").dump()};
  }
  auto result = env_->step(action);
  recorder_.record(action, result.obs, frame.value("reasoning", std::string()),
                   frame.value("reflection", std::string()));
  std::vector<nlohmann::json> out{to_wire_json(result.obs, options_.include_png && env_->config().screen)};
  if (result.done) out.push_back(finish());
  return out;
}

nlohmann::json SessionHandler::finish() {
  recorder_.finish(*env_);
  recording_ = false;
  const auto& o = recorder_.trace().outcome;
  nlohmann::json done{{"type", "done"},
                      {"reward", o.reward},
                      {"steps", o.steps_used},
                      {"terminated_by", to_string(o.terminated_by)}};
  try {
    written_.push_back(write_trace(recorder_.trace(), resolve_trace_dir(options_.trace_dir)));
    done["trace"] = written_.back();
  } catch (const Error& e) {
    done["trace_error"] = e.what();
  }
  return done;
}

std::optional<nlohmann::json> SessionHandler::close(Termination why) {
  if (!recording_) return std::nullopt;
  if (env_->active()) env_->abort(why);
  return finish();
}

void serve_connection(LineConn& conn, SessionHandler& handler, const std::atomic<bool>* stop) {
  if (!conn.send_line(handler.hello().dump())) return;
  std::string line;
  while (stop == nullptr || !stop->load()) {
    switch (conn.read_line(line, 0.25)) {
      case LineConn::Status::Eof:
        handler.close(Termination::ClientEnd);
        return;
      case LineConn::Status::Timeout:
        if (handler.idle_expired()) {
          handler.close(Termination::Timeout);
          conn.send_line(error_frame("timeout", "session idle too long").dump());
          return;
        }
        continue;
      case LineConn::Status::Line:
        break;
    }
    for (const auto& reply : handler.handle(line)) {
      if (!conn.send_line(reply.dump())) {
        handler.close(Termination::ClientEnd);
        return;
      }
    }
  }
  handler.close(Termination::ClientEnd);
}

Server::Server(std::shared_ptr<const Assets> assets, ServerOptions options)
    : assets_(std::move(assets)), options_(std::move(options)) {}

Server::~Server() { stop(); }

void Server::bind(const std::string& host, int port) { listener_ = Listener::bind(host, port); }

void Server::run() {
  while (!stop_.load()) {
    auto conn = listener_.accept(0.2);
    if (!conn) continue;
    std::lock_guard lock(mu_);
    sessions_.emplace_back([this, c = std::make_shared<LineConn>(std::move(*conn))]() mutable {
      SessionHandler handler(assets_, options_);
      serve_connection(*c, handler, &stop_);
    });
  }
}

void Server::start() {
  accept_thread_ = std::thread([this] { run(); });
}

void Server::stop() {
  stop_.store(true);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> sessions;
  {
    std::lock_guard lock(mu_);
    sessions.swap(sessions_);
  }
  for (auto& t : sessions) {
    if (t.joinable()) t.join();
  }
  listener_.close();
}

void serve_stdio(std::shared_ptr<const Assets> assets, ServerOptions options) {
  LineConn conn(0, 1, false);
  SessionHandler handler(std::move(assets), std::move(options));
  serve_connection(conn, handler);
}

}  // namespace autocab
