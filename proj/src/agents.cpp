#include "autocab/agents.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "autocab/digest.hpp"
#include "autocab/error.hpp"
#include "autocab/net.hpp"

namespace autocab {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

void walk_nodes(const UiNode& node, const std::function<void(const UiNode&)>& fn) {
  fn(node);
  for (const auto& c : node.children) walk_nodes(c, fn);
}

bool spec_has_signal(const std::vector<WidgetSpec>& widgets, const std::string& signal, bool control) {
  return std::any_of(widgets.begin(), widgets.end(), [&](const WidgetSpec& w) {
    if (w.binding.signal == signal && (!control || is_interactable_role(w.role))) return true;
    return spec_has_signal(w.children, signal, control);
  });
}

// End of the balanced object starting at `start`, or npos.
std::size_t match_object(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

bool satisfied(const Condition& c, const Value& v) { return compare_values(v, c.cmp, c.literal); }

std::string describe_condition(const Condition& c) {
  return c.signal + " " + std::string(to_string(c.cmp)) + " " + value_to_string(c.literal);
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::T3A: return "T3A";
    case Variant::M3A: return "M3A";
    case Variant::ASURADA: return "ASURADA";
  }
  return "";
}

std::string_view to_string(Backend b) { return b == Backend::Scripted ? "Scripted" : "External"; }

std::optional<Variant> parse_variant(std::string_view s) {
  const auto l = lower(s);
  if (l == "t3a") return Variant::T3A;
  if (l == "m3a") return Variant::M3A;
  if (l == "asurada") return Variant::ASURADA;
  return std::nullopt;
}

std::optional<Backend> parse_backend(std::string_view s) {
  const auto l = lower(s);
  if (l == "scripted") return Backend::Scripted;
  if (l == "external") return Backend::External;
  return std::nullopt;
}

ModalityConfig modalities_for(Variant v) {
  switch (v) {
    case Variant::T3A: return {true, false, false};
    case Variant::M3A: return {true, true, false};
    case Variant::ASURADA: return {true, true, true};
  }
  return {};
}

std::set<int> valid_indices(const Observation& obs) {
  std::set<int> out;
  if (obs.som_map) {
    for (const auto& [idx, rect] : *obs.som_map) out.insert(idx);
  }
  if (obs.a11y) {
    for (const auto* n : interactable_nodes(*obs.a11y)) out.insert(n->som_index);
  }
  return out;
}

ActionPlan parse_action_plan(std::string_view text, const std::set<int>* indices) {
  std::optional<nlohmann::json> obj;
  int attempts = 0;
  for (auto start = text.find('{'); start != std::string_view::npos && attempts < 64;
       start = text.find('{', start + 1), ++attempts) {
    const auto end = match_object(text, start);
    if (end == std::string_view::npos) break;
    auto parsed = nlohmann::json::parse(text.substr(start, end - start + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) {
      obj = std::move(parsed);
      break;
    }
  }
  if (!obj) throw Error(ErrorCode::NoJsonFound, "no JSON object in agent output");

  nlohmann::json action = obj->contains("action") ? obj->at("action") : *obj;
  if (!action.is_object()) throw Error(ErrorCode::SchemaViolation, "'action' must be an object");
  if (action.contains("type") && action.at("type").is_string()) action["type"] = lower(action.at("type").get<std::string>());
  if (action.value("type", std::string()) == "status" && action.contains("value") && action.at("value").is_string()) {
    const auto v = lower(action.at("value").get<std::string>());
    if (v == "complete") action["value"] = "Complete";
    if (v == "infeasible") action["value"] = "Infeasible";
  }

  ActionPlan plan;
  plan.action = action_from_json(action);
  if (indices != nullptr) {
    std::optional<int> idx;
    if (const auto* tap = std::get_if<TapAction>(&plan.action)) idx = tap->som_index;
    if (const auto* input = std::get_if<InputTextAction>(&plan.action)) idx = input->som_index;
    if (idx && !indices->contains(*idx)) throw Error(ErrorCode::UnknownSomIndex, std::to_string(*idx));
  }
  if (obj->contains("reasoning")) {
    const auto& r = obj->at("reasoning");
    plan.reasoning = r.is_string() ? r.get<std::string>() : r.dump();
  }
  if (obj->contains("confidence")) {
    const auto& c = obj->at("confidence");
    if (!c.is_number() || c.get<double>() < 0.0 || c.get<double>() > 1.0) {
      throw Error(ErrorCode::SchemaViolation, "confidence must be a number in [0, 1]");
    }
    plan.confidence = c.get<double>();
  }
  return plan;
}

std::string_view to_string(OutcomeTag t) {
  switch (t) {
    case OutcomeTag::Effective: return "Effective";
    case OutcomeTag::Ineffective: return "Ineffective";
    case OutcomeTag::Invalid: return "Invalid";
  }
  return "";
}

void MemoryStore::append(MemoryEntry entry) {
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_front();
}

Reflection diff_observations(const Observation& before, const Observation& after) {
  Reflection r;
  std::set<std::string> reported;
  for (const auto& [path, value] : after.signals) {
    if (path == "system.sim_clock") continue;
    const auto* old = before.signal(path);
    if (old != nullptr && !values_equal(*old, value)) {
      r.changes.push_back(path + ": " + value_to_string(*old) + "→" + value_to_string(value));
      reported.insert(path);
    }
  }
  if (before.screen_id != after.screen_id) {
    r.changes.push_back("screen: " + std::string(to_string(before.screen_id)) + "→" +
                        std::string(to_string(after.screen_id)));
  }
  if (before.a11y && after.a11y) {
    auto values = [](const UiTree& tree) {
      std::map<std::string, Value> out;
      walk_nodes(tree.root, [&out](const UiNode& n) {
        auto id = resource_id(n);
        if (!id.empty() && n.value && !out.contains(id)) out.emplace(id, *n.value);
      });
      return out;
    };
    const auto a = values(*before.a11y);
    const auto b = values(*after.a11y);
    for (const auto& [id, v] : b) {
      auto it = a.find(id);
      if (it == a.end() || reported.contains(id) || values_equal(it->second, v)) continue;
      r.changes.push_back(id + ": " + value_to_string(it->second) + "→" + value_to_string(v));
    }
  }
  if (after.event.starts_with("invalid_action")) {
    r.tag = OutcomeTag::Invalid;
    r.summary = after.event;
  } else if (r.changes.empty()) {
    r.tag = OutcomeTag::Ineffective;
    r.summary = "no effect";
  } else {
    for (std::size_t i = 0; i < r.changes.size(); ++i) r.summary += (i ? "; " : "") + r.changes[i];
  }
  return r;
}

PromptProfile PromptProfile::builtin() {
  PromptProfile p;
  p.profile_id = "default";
  p.preamble =
      "You operate the infotainment system of a car on behalf of the driver. "
      "Think step by step, then answer with one JSON object.";
  p.action_schema =
      "Reply with {\"reasoning\": string, \"action\": ACTION, \"confidence\": number in [0,1] (optional)}.\n"
      "ACTION is one of:\n"
      "  {\"type\": \"tap\", \"index\": N} or {\"type\": \"tap\", \"x\": X, \"y\": Y}\n"
      "  {\"type\": \"swipe\", \"from\": [X, Y], \"to\": [X, Y]}\n"
      "  {\"type\": \"input_text\", \"index\": N, \"text\": string}\n"
      "  {\"type\": \"api_call\", \"name\": \"open_safety_center\" | \"raise_safety_alert\", \"args\": {\"message\": string}}\n"
      "  {\"type\": \"status\", \"value\": \"Complete\" | \"Infeasible\"}\n"
      "  {\"type\": \"wait\"}\n"
      "N is an element index shown in brackets.";
  return p;
}

PromptProfile PromptProfile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open prompt profile " + path);
  try {
    auto j = nlohmann::json::parse(in);
    PromptProfile p;
    p.profile_id = j.at("profile_id").get<std::string>();
    auto text = [&j](const char* key) {
      const auto& v = j.at(key);
      if (v.is_string()) return v.get<std::string>();
      std::string out;
      for (const auto& line : v) out += (out.empty() ? "" : "\n") + line.get<std::string>();
      return out;
    };
    p.preamble = text("preamble");
    p.action_schema = text("action_schema");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

VehicleState state_from_signals(const Observation& obs) {
  VehicleState s;
  for (const auto& [path, value] : obs.signals) {
    try {
      s = override_signal(s, path, value);
    } catch (const Error&) {
    }
  }
  return s;
}

GeoContext geo_context_stage(const Observation& obs, const RegionKB& kb) {
  if (!obs.gps) throw Error(ErrorCode::ModalityViolation, "geo context needs a GPS fix");
  GeoContext ctx;
  ctx.fix = *obs.gps;
  const auto state = state_from_signals(obs);
  if (ctx.fix.quality == FixQuality::Lost) {
    const double dt = ctx.fix.timestamp - ctx.fix.last_good_timestamp;
    if (dt > 0.0) ctx.fix = dead_reckon(ctx.fix, state.motion.speed_kmh, ctx.fix.heading_deg, dt);
  }
  const auto& region = lookup_region(kb, ctx.fix);
  ctx.region_id = region.region_id;
  for (auto kind : {QueryKind::SpeedRules, QueryKind::Weather, QueryKind::Equipment}) {
    auto report = virtual_sensor_query(region, kind, state);
    report.estimated = ctx.fix.estimated;
    ctx.reports.push_back(std::move(report));
  }
  return ctx;
}

std::string build_prompt(Variant variant, const Observation& obs, const GeoContext* context, const MemoryStore& memory,
                         const std::string& instruction, const PromptProfile& profile) {
  const auto expected = modalities_for(variant);
  const ModalityConfig actual{obs.a11y.has_value(), obs.has_screen(), obs.gps.has_value()};
  if (!(expected == actual)) {
    throw Error(ErrorCode::ModalityViolation,
                std::string(to_string(variant)) + " expects " + to_json(expected).dump() + ", got " + to_json(actual).dump());
  }
  if ((variant == Variant::ASURADA) != (context != nullptr)) {
    throw Error(ErrorCode::ModalityViolation, "geo context is reserved for ASURADA and required by it");
  }
  std::string out = profile.preamble + "\n";
  out += std::string(kSectionInstruction) + "\n" + instruction + "\n";
  out += std::string(kSectionA11y) + "\n" + serialize_a11y_text(*obs.a11y);
  if (expected.screen) {
    out += std::string(kSectionScreen) + "\n";
    out += "Annotated screenshot attached: " + std::to_string(kScreenWidth) + "x" + std::to_string(kScreenHeight) +
           ", " + std::to_string(obs.som_map ? obs.som_map->size() : 0) + " marked elements, sha256 " + obs.som_sha +
           "\n";
  }
  if (expected.gps) {
    const auto& f = *obs.gps;
    out += std::string(kSectionGps) + "\n";
    out += "lat: " + fmt_coord(f.lat) + " lon: " + fmt_coord(f.lon) + " heading_deg: " + value_to_string(f.heading_deg) +
           " quality: " + (f.quality == FixQuality::Ok ? "Ok" : "Lost") + "\n";
    out += std::string(kSectionGeo) + "\n";
    out += "region: " + context->region_id + (context->fix.estimated ? " (estimated position)" : "") + "\n";
    for (const auto& report : context->reports) {
      out += "[" + std::string(to_string(report.kind)) + "]\n";
      for (const auto& [k, v] : report.facts) out += k + ": " + v + "\n";
    }
  }
  out += std::string(kSectionSignals) + "\n";
  for (const auto& [path, value] : obs.signals) out += path + ": " + value_to_string(value) + "\n";
  out += "network: " + std::string(to_string(obs.network)) + "\n";
  out += std::string(kSectionMemory) + "\n";
  if (memory.entries().empty()) out += "(empty)\n";
  for (const auto& e : memory.entries()) {
    out += "step " + std::to_string(e.step) + " [" + std::string(to_string(e.tag)) + "] " + e.summary + "\n";
  }
  out += std::string(kSectionSchema) + "\n" + profile.action_schema + "\n";
  return out;
}

ScriptedPolicy::ScriptedPolicy(Variant variant, std::shared_ptr<const Assets> assets)
    : variant_(variant), assets_(std::move(assets)) {}

void ScriptedPolicy::begin(const TaskInstance& inst) {
  inst_ = inst;
  cache_.clear();
  evidence_ = false;
  clock_ = 0.0;
}

std::optional<ScriptedPolicy::Known> ScriptedPolicy::lookup(const Observation& obs, const std::string& signal) const {
  if (const auto* v = obs.signal(signal)) return Known{*v, true};
  if (signal == "safety.notification_center_open" && obs.screen_id == ScreenId::SafetyCenter && obs.a11y) {
    const auto& layout = assets_->layouts.screen(ScreenId::SafetyCenter);
    if (layout.open_title && !obs.a11y->root.children.empty()) {
      return Known{obs.a11y->root.children.front().label == layout.open_title->second, true};
    }
  }
  if (obs.a11y) {
    std::optional<Value> found;
    walk_nodes(obs.a11y->root, [&](const UiNode& n) {
      if (!found && n.value && n.binding.signal == signal) found = *n.value;
    });
    if (found) return Known{*found, true};
  }
  if (auto it = cache_.find(signal); it != cache_.end()) return Known{it->second, false};
  return std::nullopt;
}

bool ScriptedPolicy::visible_hazard(const Observation& obs) const {
  auto flag = [&obs](const char* path) {
    const auto* v = obs.signal(path);
    return v != nullptr && values_equal(*v, Value{true});
  };
  const auto* vis = obs.signal("phenomenon.visibility_m");
  return flag("phenomenon.fog_front_window") || flag("phenomenon.fog_rear_window") ||
         (vis != nullptr && as_number(*vis).value_or(1e9) < 200.0);
}

bool ScriptedPolicy::geo_violation(const GeoContext& ctx) {
  for (const auto& r : ctx.reports) {
    if (r.kind == QueryKind::SpeedRules) {
      if (const auto* f = r.fact("overspeed"); f != nullptr && *f == "true") return true;
    }
    if (r.kind == QueryKind::Equipment) {
      if (const auto* f = r.fact("violations"); f != nullptr && *f != "0") return true;
    }
  }
  return false;
}

ActionPlan ScriptedPolicy::navigate_to_show(const Observation& obs, const std::string& signal, bool needs_control) {
  std::optional<ScreenId> target;
  for (auto id : kAllScreens) {
    if (spec_has_signal(assets_->layouts.screen(id).widgets, signal, needs_control)) {
      target = id;
      break;
    }
  }
  if (!target && signal == "safety.notification_center_open") target = ScreenId::SafetyCenter;
  if (!target || *target == obs.screen_id || !obs.a11y) {
    throw Error(ErrorCode::OracleStuck, "no screen exposes " + signal + " for task " + inst_.template_id);
  }
  const auto nav_id = "screen." + std::string(to_string(*target));
  for (const auto* n : interactable_nodes(*obs.a11y)) {
    if (resource_id(*n) == nav_id) {
      return {"Open the " + std::string(to_string(*target)) + " screen to reach " + signal + ".",
              TapAction{n->som_index, 0, 0}, std::nullopt};
    }
  }
  throw Error(ErrorCode::OracleStuck, "no navigation control for " + nav_id);
}

ActionPlan ScriptedPolicy::operate(const Observation& obs, const Condition& cond, const Value& current) {
  const auto* info = find_signal(cond.signal);
  if (cond.signal == "safety.notification_center_open") {
    const bool want = cond.cmp == Comparator::Eq ? values_equal(cond.literal, Value{true})
                                                 : !values_equal(cond.literal, Value{true});
    if (want) {
      return {"Raise the issue with the driver through the safety notification center.",
              ApiCallAction{"open_safety_center", {}}, std::nullopt};
    }
  }

  Value target = cond.literal;
  switch (cond.cmp) {
    case Comparator::Eq:
    case Comparator::Ge:
    case Comparator::Le:
      break;
    case Comparator::Ne:
      if (info->type == SignalType::Bool) {
        target = !values_equal(cond.literal, Value{true});
      } else if (info->type == SignalType::OptText || info->type == SignalType::Text) {
        target = std::string("Home");
      } else if (info->type == SignalType::Enum) {
        for (auto e : info->enum_values) {
          if (!values_equal(Value{std::string(e)}, cond.literal)) {
            target = std::string(e);
            break;
          }
        }
      } else {
        const double lit = as_number(cond.literal).value_or(info->min);
        target = lit + info->step <= info->max ? lit + info->step : lit - info->step;
      }
      break;
    case Comparator::Gt:
      target = as_number(cond.literal).value_or(0.0) + info->step;
      break;
    case Comparator::Lt:
      target = as_number(cond.literal).value_or(0.0) - info->step;
      break;
  }

  if (!obs.a11y) throw Error(ErrorCode::OracleStuck, "no accessibility tree");
  std::vector<const UiNode*> widgets;
  for (const auto* n : interactable_nodes(*obs.a11y)) {
    if (n->binding.signal == cond.signal) widgets.push_back(n);
  }
  if (widgets.empty()) return navigate_to_show(obs, cond.signal, true);

  const std::string goal = "Goal " + describe_condition(cond) + ", currently " + value_to_string(current) + ". ";
  auto tap = [&](const UiNode* n, const std::string& why) {
    return ActionPlan{goal + why + " [" + std::to_string(n->som_index) + "] " + n->label + ".",
                      TapAction{n->som_index, 0, 0}, std::nullopt};
  };

  for (const auto* n : widgets) {
    if (n->role == Role::Toggle && info->type == SignalType::Bool && !values_equal(current, target)) {
      return tap(n, "Toggle");
    }
  }
  for (const auto* n : widgets) {
    if (n->role == Role::Button && n->binding.op == ControlOp::Set && n->binding.value &&
        values_equal(*n->binding.value, target)) {
      return tap(n, "Press");
    }
  }
  if (const auto* text = std::get_if<std::string>(&target)) {
    for (const auto* n : widgets) {
      if (n->role == Role::TextField) {
        return {goal + "Type \"" + *text + "\" into [" + std::to_string(n->som_index) + "] " + n->label + ".",
                InputTextAction{n->som_index, *text}, std::nullopt};
      }
    }
  }
  const auto want = as_number(target);
  const auto have = as_number(current);
  if (want && have) {
    for (const auto* n : widgets) {
      if (n->role != Role::Slider) continue;
      const int y = n->bounds.center_y();
      const int x0 = slider_x_for(*n, *want);
      for (int dx : {0, -1, 1, -2, 2}) {
        const int x = std::clamp(x0 + dx, n->bounds.x, n->bounds.x + n->bounds.w - 1);
        const auto effect = node_tap_effect(*n, x, y);
        const auto* cmd = std::get_if<ControlCommand>(&effect);
        if (cmd != nullptr && cmd->value && values_equal(*cmd->value, target)) {
          return {goal + "Drag [" + std::to_string(n->som_index) + "] " + n->label + " to " + value_to_string(target) +
                      ".",
                  TapAction{std::nullopt, x, y}, std::nullopt};
        }
      }
    }
    const auto op = *have < *want ? ControlOp::Increment : ControlOp::Decrement;
    for (const auto* n : widgets) {
      if (n->role == Role::Button && n->binding.op == op) return tap(n, op == ControlOp::Increment ? "Raise" : "Lower");
    }
  }
  throw Error(ErrorCode::OracleStuck, "no widget sets " + cond.signal + " to " + value_to_string(target));
}

ActionPlan ScriptedPolicy::decide(const Observation& obs, const GeoContext* context) {
  // Scripted events make remembered values stale.
  if (const auto* clock = obs.signal("system.sim_clock")) {
    const double now = as_number(*clock).value_or(clock_);
    for (const auto& e : inst_.scenario.entries) {
      if (e.t_s > clock_ && e.t_s <= now) cache_.clear();
    }
    clock_ = now;
  }
  for (const auto& [path, value] : obs.signals) cache_[path] = value;
  if (obs.a11y) {
    walk_nodes(obs.a11y->root, [this](const UiNode& n) {
      if (n.value && !n.binding.signal.empty()) cache_[n.binding.signal] = *n.value;
    });
  }

  std::string context_note;
  if (context != nullptr) {
    context_note = "Location " + context->region_id + (context->fix.estimated ? " (dead-reckoned)" : "") + ": ";
    for (const auto& r : context->reports) {
      for (const auto& [k, v] : r.facts) {
        if (k == "limit_kmh" || k == "overspeed" || k == "violations" || v.starts_with("VIOLATED")) {
          context_note += k + "=" + v + "; ";
        }
      }
    }
    if (geo_violation(*context)) evidence_ = true;
  }
  if (visible_hazard(obs)) evidence_ = true;

  const auto& conds = inst_.validator;
  const bool all = std::all_of(conds.begin(), conds.end(), [&](const Condition& c) {
    auto k = lookup(obs, c.signal);
    return k && satisfied(c, k->value);
  });
  if (all) return {context_note + "Every goal condition holds. Task complete.", StatusAction{TaskStatus::Complete}, 1.0};

  if (inst_.category == Category::DrivingAlignment && !evidence_) {
    return {context_note +
                "Nothing visible indicates a hazard and no local rules are known; the current driving state is "
                "treated as safe, so there is nothing to correct.",
            StatusAction{TaskStatus::Infeasible}, 0.6};
  }

  for (const auto& c : conds) {
    const auto* info = find_signal(c.signal);
    if (info == nullptr || !info->writable) continue;
    auto k = lookup(obs, c.signal);
    if (k && satisfied(c, k->value)) continue;
    if (!k && c.signal != "safety.notification_center_open") return navigate_to_show(obs, c.signal, true);
    auto plan = operate(obs, c, k ? k->value : Value{});
    plan.reasoning = context_note + plan.reasoning;
    return plan;
  }
  for (const auto& c : conds) {
    const auto* info = find_signal(c.signal);
    if (info == nullptr || info->writable) continue;
    auto k = lookup(obs, c.signal);
    if (!k || (!satisfied(c, k->value) && !k->visible)) return navigate_to_show(obs, c.signal, false);
    if (!satisfied(c, k->value)) {
      return {context_note + "Waiting for " + describe_condition(c) + " (now " + value_to_string(k->value) + ").",
              WaitAction{}, std::nullopt};
    }
  }
  return {context_note + "Waiting for the display to settle.", WaitAction{}, std::nullopt};
}

class PipelineAgent::Remote {
 public:
  Remote(const std::string& endpoint, double timeout_s) : timeout_s_(timeout_s) {
    auto [host, port] = parse_endpoint(endpoint);
    try {
      conn_ = LineConn::connect(host, port, timeout_s);
    } catch (const Error& e) {
      throw Error(ErrorCode::AgentFailure, e.what());
    }
  }

  std::string request(nlohmann::json frame) {
    if (!conn_.send_line(frame.dump())) throw Error(ErrorCode::AgentFailure, "completion endpoint closed");
    std::string line;
    switch (conn_.read_line(line, timeout_s_)) {
      case LineConn::Status::Timeout: throw Error(ErrorCode::AgentFailure, "completion timed out");
      case LineConn::Status::Eof: throw Error(ErrorCode::AgentFailure, "completion endpoint closed");
      case LineConn::Status::Line: break;
    }
    auto reply = nlohmann::json::parse(line, nullptr, false);
    if (reply.is_discarded() || reply.value("type", std::string()) != "completion" || !reply.contains("text") ||
        !reply.at("text").is_string()) {
      throw Error(ErrorCode::AgentFailure, "malformed completion frame");
    }
    return reply.at("text").get<std::string>();
  }

 private:
  LineConn conn_;
  double timeout_s_;
};

PipelineAgent::PipelineAgent(AgentConfig config, std::shared_ptr<const Assets> assets, PromptProfile profile)
    : config_(std::move(config)),
      assets_(std::move(assets)),
      profile_(std::move(profile)),
      memory_(config_.memory_capacity) {
  if (config_.backend == Backend::Scripted) {
    scripted_.emplace(config_.variant, assets_);
  } else {
    if (config_.endpoint.empty()) throw Error(ErrorCode::PreconditionViolated, "External backend needs an endpoint");
    remote_ = std::make_unique<Remote>(config_.endpoint, config_.step_timeout_s);
  }
}

PipelineAgent::~PipelineAgent() = default;

void PipelineAgent::begin(const TaskInstance& inst) {
  instruction_ = inst.instruction;
  memory_ = MemoryStore(config_.memory_capacity);
  if (scripted_) scripted_->begin(inst);
}

AgentDecision PipelineAgent::act(const Observation& obs) {
  std::optional<GeoContext> context;
  if (config_.variant == Variant::ASURADA) context = geo_context_stage(obs, assets_->kb);
  last_prompt_ = build_prompt(config_.variant, obs, context ? &*context : nullptr, memory_, instruction_, profile_);
  if (scripted_) {
    auto plan = scripted_->decide(obs, context ? &*context : nullptr);
    return {std::move(plan.action), std::move(plan.reasoning)};
  }
  nlohmann::json frame{{"type", "prompt"},
                       {"variant", to_string(config_.variant)},
                       {"step", obs.step_index},
                       {"prompt", last_prompt_}};
  if (obs.has_screen()) frame["som_png_b64"] = base64_encode(encode_png(obs.som_screen().buffer));
  const auto text = remote_->request(std::move(frame));
  const auto indices = valid_indices(obs);
  try {
    auto plan = parse_action_plan(text, &indices);
    return {std::move(plan.action), plan.reasoning.empty() ? text : plan.reasoning};
  } catch (const Error& e) {
    return {InvalidAction{e.what(), text}, text};
  }
}

std::string PipelineAgent::reflect(const Observation& before, const Action& action, const Observation& after) {
  auto r = diff_observations(before, after);
  std::string summary = r.summary;
  if (remote_) {
    summary = remote_->request({{"type", "reflect"},
                                {"action", to_json(action)},
                                {"diff", r.changes},
                                {"event", after.event}});
  }
  memory_.append({after.step_index, summary, r.tag});
  return summary;
}

std::unique_ptr<AgentHandle> make_agent(const AgentConfig& config, std::shared_ptr<const Assets> assets) {
  namespace fs = std::filesystem;
  const auto path = fs::path(assets->data_dir) / "prompts" / (config.prompt_profile + ".json");
  PromptProfile profile;
  if (fs::exists(path)) {
    profile = PromptProfile::load(path.string());
  } else if (config.prompt_profile == "default") {
    profile = PromptProfile::builtin();
  } else {
    throw Error(ErrorCode::IoError, "unknown prompt profile " + config.prompt_profile);
  }
  return std::make_unique<PipelineAgent>(config, std::move(assets), std::move(profile));
}

}  // namespace autocab
