#include "autocab/engine.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "autocab/digest.hpp"
#include "autocab/error.hpp"

namespace autocab {

namespace {

namespace fs = std::filesystem;

constexpr std::array<std::string_view, 5> kTerminationNames{"Status", "MaxSteps", "AgentFailure", "Timeout",
                                                            "ClientEnd"};

bool observed_signal(std::string_view path, const ModalityConfig& config) {
  if (path.starts_with("motion.") || path.starts_with("phenomenon.") || path == "system.sim_clock") return true;
  return config.gps && path.starts_with("road.");
}

[[noreturn]] void schema_error(const std::string& msg) { throw Error(ErrorCode::SchemaViolation, msg); }

int int_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) schema_error(std::string("field '") + key + "' must be an integer");
  return j.at(key).get<int>();
}

std::pair<int, int> point_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) schema_error(std::string("missing field '") + key + "'");
  const auto& p = j.at(key);
  if (p.is_array() && p.size() == 2 && p[0].is_number_integer() && p[1].is_number_integer()) {
    return {p[0].get<int>(), p[1].get<int>()};
  }
  if (p.is_object()) return {int_field(p, "x"), int_field(p, "y")};
  schema_error(std::string("field '") + key + "' must be [x, y]");
}

std::string sha_hex(const std::vector<std::uint8_t>& bytes) { return to_hex(sha256(bytes)); }

}  // namespace

std::string default_data_dir() {
  if (const char* env = std::getenv("AUTOCAB_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return AUTOCAB_DATA_DIR;
}

std::shared_ptr<const Assets> Assets::load(const std::string& data_dir, const std::string& manifest) {
  auto assets = std::make_shared<Assets>();
  const fs::path dir(data_dir);
  assets->data_dir = data_dir;
  assets->suite = load_suite(manifest.empty() ? (dir / "suite" / "manifest.json").string() : manifest);
  assets->kb = RegionKB::load((dir / "regions.json").string());
  assets->layouts = LayoutSet::load((dir / "layouts.json").string());
  assets->outage_zones = assets->kb.all_outage_zones();
  for (const auto& t : assets->suite.templates) {
    const auto* region = assets->kb.find(t.default_region);
    if (region == nullptr) {
      throw Error(ErrorCode::UnknownRegion, t.template_id + ": default_region " + t.default_region);
    }
    for (const auto& tag : t.geo_requirements) {
      if (!region->has_tag(tag)) {
        throw Error(ErrorCode::GeoMismatch, t.template_id + ": default region lacks tag " + tag);
      }
    }
  }
  return assets;
}

nlohmann::json to_json(const ModalityConfig& m) {
  nlohmann::json j = nlohmann::json::array();
  if (m.a11y) j.push_back("a11y");
  if (m.screen) j.push_back("screen");
  if (m.gps) j.push_back("gps");
  return j;
}

ModalityConfig modality_config_from_json(const nlohmann::json& j) {
  if (!j.is_array()) schema_error("modalities must be an array");
  ModalityConfig m{false, false, false};
  for (const auto& item : j) {
    const auto name = item.is_string() ? item.get<std::string>() : std::string();
    if (name == "a11y") {
      m.a11y = true;
    } else if (name == "screen") {
      m.screen = true;
    } else if (name == "gps") {
      m.gps = true;
    } else {
      schema_error("unknown modality " + item.dump());
    }
  }
  return m;
}

std::string_view to_string(NetworkStatus s) { return s == NetworkStatus::Online ? "Online" : "Offline"; }

std::string_view to_string(Termination t) { return kTerminationNames[static_cast<std::size_t>(t)]; }

std::optional<Termination> parse_termination(std::string_view s) {
  for (std::size_t i = 0; i < kTerminationNames.size(); ++i) {
    if (kTerminationNames[i] == s) return static_cast<Termination>(i);
  }
  return std::nullopt;
}

PixelBuffer Observation::screen() const {
  if (!frame) throw Error(ErrorCode::ModalityViolation, "observation has no screen");
  return render(*frame);
}

AnnotatedScreen Observation::som_screen() const {
  if (!frame) throw Error(ErrorCode::ModalityViolation, "observation has no screen");
  return annotate_som(*frame, render(*frame));
}

FrameDigests frame_digests(const UiTree& tree) {
  static std::mutex mu;
  static std::unordered_map<std::string, FrameDigests> cache;
  auto key = to_json(tree).dump() + "#" + std::to_string(tree.brightness);
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto buf = render(tree);
  auto som = annotate_som(tree, buf);
  FrameDigests d{sha_hex(buf.data), sha_hex(som.buffer.data), std::move(som.index_map)};
  std::lock_guard lock(mu);
  if (cache.size() >= 4096) cache.clear();
  cache.emplace(std::move(key), d);
  return d;
}

const Value* Observation::signal(std::string_view path) const {
  for (const auto& [p, v] : signals) {
    if (p == path) return &v;
  }
  return nullptr;
}

nlohmann::json canonical_json(const Observation& obs) {
  nlohmann::json signals = nlohmann::json::object();
  for (const auto& [path, value] : obs.signals) signals[path] = value_to_json(value);
  return {{"step", obs.step_index},
          {"instruction", obs.instruction},
          {"screen_id", to_string(obs.screen_id)},
          {"a11y", obs.a11y ? to_json(*obs.a11y) : nlohmann::json()},
          {"screen_sha", obs.screen_sha},
          {"som_sha", obs.som_sha},
          {"som_map", obs.som_map ? to_json(*obs.som_map) : nlohmann::json()},
          {"gps", obs.gps ? to_json(*obs.gps) : nlohmann::json()},
          {"signals", signals},
          {"network", to_string(obs.network)},
          {"event", obs.event}};
}

std::string observation_digest(const Observation& obs) { return sha256_hex(canonical_json(obs).dump()); }

nlohmann::json to_wire_json(const Observation& obs, bool include_png) {
  nlohmann::json j = canonical_json(obs);
  j["type"] = "obs";
  j.erase("screen_sha");
  j.erase("som_sha");
  if (!obs.som_map) j.erase("som_map");
  if (!obs.gps) j.erase("gps");
  if (!obs.a11y) j.erase("a11y");
  if (include_png && obs.has_screen()) {
    auto som = obs.som_screen();
    j["screen_png_b64"] = base64_encode(encode_png(obs.screen()));
    j["som_png_b64"] = base64_encode(encode_png(som.buffer));
  }
  j["digest"] = observation_digest(obs);
  return j;
}

nlohmann::json to_json(const Action& action) {
  return std::visit(
      [](const auto& a) -> nlohmann::json {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, TapAction>) {
          if (a.som_index) return {{"type", "tap"}, {"index", *a.som_index}};
          return {{"type", "tap"}, {"x", a.x}, {"y", a.y}};
        } else if constexpr (std::is_same_v<T, SwipeAction>) {
          return {{"type", "swipe"}, {"from", {a.from_x, a.from_y}}, {"to", {a.to_x, a.to_y}}};
        } else if constexpr (std::is_same_v<T, InputTextAction>) {
          return {{"type", "input_text"}, {"index", a.som_index}, {"text", a.text}};
        } else if constexpr (std::is_same_v<T, ApiCallAction>) {
          return {{"type", "api_call"}, {"name", a.name}, {"args", a.args}};
        } else if constexpr (std::is_same_v<T, StatusAction>) {
          return {{"type", "status"}, {"value", a.status == TaskStatus::Complete ? "Complete" : "Infeasible"}};
        } else if constexpr (std::is_same_v<T, WaitAction>) {
          return {{"type", "wait"}};
        } else {
          return {{"type", "invalid"}, {"reason", a.reason}, {"raw", a.raw}};
        }
      },
      action);
}

Action action_from_json(const nlohmann::json& j) {
  if (!j.is_object()) schema_error("action must be an object");
  if (!j.contains("type") || !j.at("type").is_string()) schema_error("action needs a string 'type'");
  const auto type = j.at("type").get<std::string>();
  if (type == "tap") {
    TapAction a;
    if (j.contains("index")) {
      a.som_index = int_field(j, "index");
    } else {
      a.x = int_field(j, "x");
      a.y = int_field(j, "y");
    }
    return a;
  }
  if (type == "swipe") {
    auto [fx, fy] = point_field(j, "from");
    auto [tx, ty] = point_field(j, "to");
    return SwipeAction{fx, fy, tx, ty};
  }
  if (type == "input_text") {
    if (!j.contains("text") || !j.at("text").is_string()) schema_error("input_text needs a string 'text'");
    return InputTextAction{int_field(j, "index"), j.at("text").get<std::string>()};
  }
  if (type == "api_call") {
    if (!j.contains("name") || !j.at("name").is_string()) schema_error("api_call needs a string 'name'");
    ApiCallAction a;
    a.name = j.at("name").get<std::string>();
    if (std::find(kApiCatalog.begin(), kApiCatalog.end(), a.name) == kApiCatalog.end()) {
      schema_error("api_call name not in catalog: " + a.name);
    }
    if (j.contains("args")) {
      if (!j.at("args").is_object()) schema_error("api_call args must be an object");
      for (const auto& [k, v] : j.at("args").items()) {
        if (!v.is_string()) schema_error("api_call arg '" + k + "' must be a string");
        a.args.emplace(k, v.get<std::string>());
      }
    }
    return a;
  }
  if (type == "status") {
    if (!j.contains("value") || !j.at("value").is_string()) schema_error("status needs a string 'value'");
    auto v = j.at("value").get<std::string>();
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "complete") return StatusAction{TaskStatus::Complete};
    if (v == "infeasible") return StatusAction{TaskStatus::Infeasible};
    schema_error("status value must be Complete or Infeasible");
  }
  if (type == "wait") return WaitAction{};
  if (type == "invalid") {
    auto text = [&j](const char* key) {
      return j.contains(key) && j.at(key).is_string() ? j.at(key).get<std::string>() : std::string();
    };
    return InvalidAction{text("reason"), text("raw")};
  }
  schema_error("unknown action type " + type);
}

std::string describe(const Action& action) { return to_json(action).dump(); }

Environment::Environment(std::shared_ptr<const Assets> assets) : assets_(std::move(assets)) {}

UiTree Environment::current_tree() const { return build_ui_tree(assets_->layouts, state_, screen_); }

Observation Environment::reset(const TaskInstance& inst, const ModalityConfig& config) {
  auto start = initialize_episode(inst, assets_->kb);
  inst_ = inst;
  config_ = config;
  state_ = std::move(start.state);
  track_ = start.track;
  screen_ = ScreenId::Home;
  steps_ = 0;
  active_ = true;
  last_event_ = "reset";
  termination_.reset();
  reward_.reset();
  return observe();
}

Observation Environment::observe() const {
  Observation obs;
  obs.step_index = steps_;
  obs.instruction = inst_.instruction;
  obs.screen_id = screen_;
  obs.event = last_event_;
  auto tree = current_tree();
  if (config_.screen) {
    auto digests = frame_digests(tree);
    obs.screen_sha = std::move(digests.screen_sha);
    obs.som_sha = std::move(digests.som_sha);
    obs.som_map = std::move(digests.som_map);
    obs.frame = std::make_shared<const UiTree>(tree);
  }
  if (config_.a11y) obs.a11y = std::move(tree);
  if (config_.gps) obs.gps = track_.fix;
  for (const auto& info : signal_table()) {
    if (observed_signal(info.path, config_)) obs.signals.emplace_back(std::string(info.path), info.get(state_));
  }
  obs.network = track_.fix.quality == FixQuality::Lost ? NetworkStatus::Offline : NetworkStatus::Online;
  return obs;
}

std::string Environment::apply_effect(const GuiEffect& effect) {
  if (const auto* cmd = std::get_if<ControlCommand>(&effect)) {
    state_ = apply_control(state_, *cmd);
  } else if (const auto* nav = std::get_if<NavigateTo>(&effect)) {
    screen_ = nav->screen;
    if (screen_ == ScreenId::SafetyCenter) state_.safety.notification_center_open = true;
  }
  return describe(effect);
}

std::string Environment::apply(const Action& action) {
  if (const auto* tap = std::get_if<TapAction>(&action)) {
    const auto tree = current_tree();
    int x = tap->x;
    int y = tap->y;
    if (tap->som_index) {
      const auto* node = find_by_som_index(tree, *tap->som_index);
      if (node == nullptr) throw Error(ErrorCode::UnknownSomIndex, std::to_string(*tap->som_index));
      x = node->bounds.center_x();
      y = node->bounds.center_y();
    }
    return "tap: " + apply_effect(dispatch_tap(tree, x, y));
  }
  if (const auto* swipe = std::get_if<SwipeAction>(&action)) {
    return "swipe: " +
           apply_effect(dispatch_swipe(current_tree(), swipe->from_x, swipe->from_y, swipe->to_x, swipe->to_y));
  }
  if (const auto* input = std::get_if<InputTextAction>(&action)) {
    return "input_text: " + apply_effect(dispatch_text(current_tree(), input->som_index, input->text));
  }
  if (const auto* call = std::get_if<ApiCallAction>(&action)) {
    if (call->name == "open_safety_center") {
      state_.safety.notification_center_open = true;
      screen_ = ScreenId::SafetyCenter;
      return "api_call: open_safety_center";
    }
    if (call->name == "raise_safety_alert") {
      auto it = call->args.find("message");
      if (it == call->args.end() || it->second.empty()) {
        throw Error(ErrorCode::SchemaViolation, "raise_safety_alert needs a message");
      }
      state_.safety.active_alerts.push_back({"agent", it->second, state_.system.sim_clock});
      return "api_call: raise_safety_alert";
    }
    throw Error(ErrorCode::SchemaViolation, "api_call name not in catalog: " + call->name);
  }
  if (const auto* status = std::get_if<StatusAction>(&action)) {
    termination_ = Termination::Status;
    return status->status == TaskStatus::Complete ? "status: Complete" : "status: Infeasible";
  }
  if (std::holds_alternative<WaitAction>(action)) return "wait";
  const auto& invalid = std::get<InvalidAction>(action);
  throw Error(ErrorCode::SchemaViolation, invalid.reason);
}

StepResult Environment::step(const Action& action) {
  if (!active_) throw Error(ErrorCode::SessionInactive, "episode is not running");
  ++steps_;
  try {
    last_event_ = apply(action);
  } catch (const Error& e) {
    last_event_ = std::string("invalid_action: ") + e.what();
  }
  state_ = tick(state_, 1.0, inst_.scenario);
  track_ = advance_track(track_, state_.motion.speed_kmh, 1.0, assets_->outage_zones);
  if (!termination_ && steps_ >= inst_.max_steps) termination_ = Termination::MaxSteps;
  StepResult result;
  if (termination_) {
    active_ = false;
    reward_ = validate(inst_, state_) ? 1 : 0;
    result.done = true;
    result.reward = reward_;
  }
  result.obs = observe();
  return result;
}

void Environment::abort(Termination why) {
  if (!active_) return;
  active_ = false;
  termination_ = why;
  reward_ = 0;
}

std::string chain_digest(const std::string& prev, const Action& action, const std::string& obs_digest) {
  return sha256_hex(prev + "\n" + to_json(action).dump() + "\n" + obs_digest);
}

std::int64_t count_tokens(std::string_view text) {
  std::int64_t n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

void TraceRecorder::begin(const Environment& env, const Observation& obs0, std::string variant, std::string backend) {
  trace_ = EpisodeTrace{};
  auto& h = trace_.header;
  const auto& inst = env.instance();
  h.suite_version = env.assets().suite.suite_version;
  h.kb_version = env.assets().kb.kb_version();
  h.template_id = inst.template_id;
  h.category = std::string(to_string(inst.category));
  h.functional_area = std::string(to_string(inst.functional_area));
  h.geo_dependent = inst.geo_dependent;
  h.seed = inst.seed;
  h.region_id = inst.region_id;
  h.modalities = env.config();
  h.variant = std::move(variant);
  h.backend = std::move(backend);
  h.max_steps = inst.max_steps;
  h.instruction = inst.instruction;
  h.initial_digest = inst.initial_digest.hex();
  h.obs0_digest = observation_digest(obs0);
  chain_ = h.obs0_digest;
}

void TraceRecorder::record(const Action& action, const Observation& obs, std::string reasoning,
                           std::string reflection) {
  StepRecord r;
  r.step = obs.step_index;
  r.action = action;
  r.obs_digest = observation_digest(obs);
  chain_ = chain_digest(chain_, action, r.obs_digest);
  r.chain_digest = chain_;
  r.event = obs.event;
  r.reasoning_tokens = count_tokens(reasoning);
  r.reasoning = std::move(reasoning);
  r.reflection = std::move(reflection);
  trace_.steps.push_back(std::move(r));
}

void TraceRecorder::finish(const Environment& env) {
  trace_.outcome.reward = env.reward().value_or(0);
  trace_.outcome.steps_used = env.steps_used();
  trace_.outcome.terminated_by = env.termination().value_or(Termination::ClientEnd);
}

std::string trace_to_jsonl(const EpisodeTrace& trace) {
  const auto& h = trace.header;
  nlohmann::json header{{"kind", "header"},
                        {"engine_version", h.engine_version},
                        {"suite_version", h.suite_version},
                        {"kb_version", h.kb_version},
                        {"template_id", h.template_id},
                        {"category", h.category},
                        {"functional_area", h.functional_area},
                        {"geo_dependent", h.geo_dependent},
                        {"seed", h.seed},
                        {"region_id", h.region_id},
                        {"modalities", to_json(h.modalities)},
                        {"variant", h.variant},
                        {"backend", h.backend},
                        {"max_steps", h.max_steps},
                        {"instruction", h.instruction},
                        {"initial_digest", h.initial_digest},
                        {"obs0_digest", h.obs0_digest},
                        {"created_at", h.created_at}};
  std::string out = header.dump() + "\n";
  for (const auto& s : trace.steps) {
    nlohmann::json line{{"kind", "step"},
                        {"step", s.step},
                        {"action", to_json(s.action)},
                        {"obs_digest", s.obs_digest},
                        {"chain_digest", s.chain_digest},
                        {"event", s.event},
                        {"reasoning", s.reasoning},
                        {"reasoning_tokens", s.reasoning_tokens},
                        {"reflection", s.reflection}};
    out += line.dump() + "\n";
  }
  nlohmann::json outcome{{"kind", "outcome"},
                         {"reward", trace.outcome.reward},
                         {"steps_used", trace.outcome.steps_used},
                         {"terminated_by", to_string(trace.outcome.terminated_by)}};
  out += outcome.dump() + "\n";
  return out;
}

EpisodeTrace trace_from_jsonl(std::string_view text) {
  EpisodeTrace trace;
  bool have_header = false;
  bool have_outcome = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "trace line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "header") {
        auto& h = trace.header;
        h.engine_version = j.at("engine_version").get<std::string>();
        h.suite_version = j.at("suite_version").get<std::string>();
        h.kb_version = j.at("kb_version").get<std::string>();
        h.template_id = j.at("template_id").get<std::string>();
        h.category = j.at("category").get<std::string>();
        h.functional_area = j.at("functional_area").get<std::string>();
        h.geo_dependent = j.at("geo_dependent").get<bool>();
        h.seed = j.at("seed").get<std::uint64_t>();
        h.region_id = j.at("region_id").get<std::string>();
        h.modalities = modality_config_from_json(j.at("modalities"));
        h.variant = j.at("variant").get<std::string>();
        h.backend = j.at("backend").get<std::string>();
        h.max_steps = j.at("max_steps").get<int>();
        h.instruction = j.at("instruction").get<std::string>();
        h.initial_digest = j.at("initial_digest").get<std::string>();
        h.obs0_digest = j.at("obs0_digest").get<std::string>();
        h.created_at = j.value("created_at", std::string());
        have_header = true;
      } else if (kind == "step") {
        StepRecord s;
        s.step = j.at("step").get<int>();
        s.action = action_from_json(j.at("action"));
        s.obs_digest = j.at("obs_digest").get<std::string>();
        s.chain_digest = j.at("chain_digest").get<std::string>();
        s.event = j.value("event", std::string());
        s.reasoning = j.value("reasoning", std::string());
        s.reasoning_tokens = j.value("reasoning_tokens", std::int64_t{0});
        s.reflection = j.value("reflection", std::string());
        trace.steps.push_back(std::move(s));
      } else if (kind == "outcome") {
        trace.outcome.reward = j.at("reward").get<int>();
        trace.outcome.steps_used = j.at("steps_used").get<int>();
        auto t = parse_termination(j.at("terminated_by").get<std::string>());
        if (!t) throw Error(ErrorCode::ParseError, "unknown terminated_by");
        trace.outcome.terminated_by = *t;
        have_outcome = true;
      } else {
        throw Error(ErrorCode::ParseError, "unknown record kind " + kind);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header || !have_outcome) throw Error(ErrorCode::ParseError, "trace lacks header or outcome");
  return trace;
}

std::string trace_file_name(const TraceHeader& h) {
  return h.template_id + "__s" + std::to_string(h.seed) + "__" + h.region_id + "__" + h.variant + "-" + h.backend +
         ".jsonl";
}

std::string write_trace(const EpisodeTrace& trace, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const auto final_path = fs::path(dir) / trace_file_name(trace.header);
  const auto tmp_path = fs::path(final_path.string() + ".tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp_path.string());
    out << trace_to_jsonl(trace);
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp_path.string());
  }
  fs::rename(tmp_path, final_path, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename " + tmp_path.string() + ": " + ec.message());
  return final_path.string();
}

EpisodeTrace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return trace_from_jsonl(buf.str());
}

int cleanup_trace_dir(const std::string& dir) {
  int removed = 0;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tmp") {
      fs::remove(entry.path(), ec);
      if (!ec) ++removed;
    }
  }
  return removed;
}

Outcome replay(const EpisodeTrace& trace, std::shared_ptr<const Assets> assets) {
  const auto& h = trace.header;
  if (h.engine_version != kEngineVersion) {
    throw Error(ErrorCode::PreconditionViolated, "trace engine " + h.engine_version + " != " + std::string(kEngineVersion));
  }
  auto mismatch = [](int step, const std::string& what) {
    throw Error(ErrorCode::DigestMismatch, "at step " + std::to_string(step) + ": " + what);
  };
  const auto& tmpl = assets->suite.require(h.template_id);
  auto inst = instantiate(tmpl, h.seed, assets->kb.require(h.region_id));
  inst.max_steps = h.max_steps;
  if (inst.initial_digest.hex() != h.initial_digest) mismatch(0, "initial state");
  Environment env(assets);
  auto obs = env.reset(inst, h.modalities);
  std::string chain = observation_digest(obs);
  if (chain != h.obs0_digest) mismatch(0, "observation");
  for (const auto& rec : trace.steps) {
    if (!env.active()) mismatch(rec.step, "episode already ended");
    auto result = env.step(rec.action);
    const auto digest = observation_digest(result.obs);
    if (result.obs.step_index != rec.step) mismatch(rec.step, "step numbering");
    if (digest != rec.obs_digest) mismatch(rec.step, "observation");
    chain = chain_digest(chain, rec.action, digest);
    if (chain != rec.chain_digest) mismatch(rec.step, "action chain");
  }
  const auto expected = trace.outcome.terminated_by;
  if (env.active() && expected != Termination::Status && expected != Termination::MaxSteps) env.abort(expected);
  Outcome out{env.reward().value_or(0), env.steps_used(), env.termination().value_or(Termination::ClientEnd)};
  if (!(out == trace.outcome)) mismatch(env.steps_used(), "outcome");
  return out;
}

EpisodeTrace run_episode(AgentHandle& agent, const TaskInstance& inst, std::shared_ptr<const Assets> assets,
                         const EpisodeOptions& options) {
  TaskInstance local = inst;
  if (options.max_steps) local.max_steps = *options.max_steps;
  Environment env(std::move(assets));
  auto obs = env.reset(local, agent.modalities());
  TraceRecorder recorder;
  recorder.begin(env, obs, agent.variant(), agent.backend());
  recorder.trace().header.created_at = options.created_at;
  try {
    agent.begin(local);
    while (env.active()) {
      auto decision = agent.act(obs);
      auto result = env.step(decision.action);
      std::string reflection;
      bool reflect_failed = false;
      try {
        reflection = agent.reflect(obs, decision.action, result.obs);
      } catch (const std::exception&) {
        reflect_failed = true;
      }
      recorder.record(decision.action, result.obs, std::move(decision.reasoning), std::move(reflection));
      if (reflect_failed) {
        env.abort(Termination::AgentFailure);
        break;
      }
      obs = std::move(result.obs);
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SessionInactive) throw;
    env.abort(Termination::AgentFailure);
  } catch (const std::exception&) {
    env.abort(Termination::AgentFailure);
  }
  recorder.finish(env);
  return recorder.trace();
}

std::string utc_now_iso() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace autocab
