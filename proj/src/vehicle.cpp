#include "autocab/vehicle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "autocab/digest.hpp"
#include "autocab/error.hpp"

namespace autocab {

namespace {

constexpr std::array<std::string_view, 3> kAcModeNames{"Off", "Manual", "Auto"};
constexpr std::array<std::string_view, 4> kSourceNames{"Radio", "Bluetooth", "USB", "Streaming"};
constexpr std::array<std::string_view, 5> kWeatherNames{"Clear", "Rain", "Fog", "Snow", "Heat"};
constexpr std::array<std::string_view, 3> kRoadNames{"Urban", "Highway", "Rural"};

template <typename E, std::size_t N>
E enum_from_name(const std::array<std::string_view, N>& names, const std::string& s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  throw Error(ErrorCode::TypeMismatch, "unknown enumerator '" + s + "'");
}

template <std::size_t N>
std::vector<std::string_view> names_of(const std::array<std::string_view, N>& names) {
  return {names.begin(), names.end()};
}

bool as_bool(const Value& v) { return std::get<bool>(v); }
std::int64_t as_int(const Value& v) { return std::get<std::int64_t>(v); }
double as_real(const Value& v) { return std::get<double>(v); }
const std::string& as_text(const Value& v) { return std::get<std::string>(v); }

constexpr double kHuge = 1e9;

std::vector<SignalInfo> build_table() {
  std::vector<SignalInfo> t;
  auto add = [&t](SignalInfo info) { t.push_back(std::move(info)); };
  using S = VehicleState;
  using V = Value;

  add({"hvac.setpoint_c", SignalType::Real, 16.0, 30.0, 0.5, {}, true,
       [](const S& s) -> V { return s.hvac.setpoint_c; },
       [](S& s, const V& v) { s.hvac.setpoint_c = as_real(v); }});
  add({"hvac.fan_speed", SignalType::Int, 0, 6, 1, {}, true,
       [](const S& s) -> V { return s.hvac.fan_speed; },
       [](S& s, const V& v) { s.hvac.fan_speed = as_int(v); }});
  add({"hvac.ac_mode", SignalType::Enum, 0, 0, 1, names_of(kAcModeNames), true,
       [](const S& s) -> V { return std::string(to_string(s.hvac.ac_mode)); },
       [](S& s, const V& v) { s.hvac.ac_mode = enum_from_name<AcMode>(kAcModeNames, as_text(v)); }});
  add({"hvac.seat_heater_driver", SignalType::Int, 0, 3, 1, {}, true,
       [](const S& s) -> V { return s.hvac.seat_heater_driver; },
       [](S& s, const V& v) { s.hvac.seat_heater_driver = as_int(v); }});
  add({"hvac.seat_heater_passenger", SignalType::Int, 0, 3, 1, {}, true,
       [](const S& s) -> V { return s.hvac.seat_heater_passenger; },
       [](S& s, const V& v) { s.hvac.seat_heater_passenger = as_int(v); }});
  add({"hvac.defrost_front", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.hvac.defrost_front; },
       [](S& s, const V& v) { s.hvac.defrost_front = as_bool(v); }});
  add({"hvac.defrost_rear", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.hvac.defrost_rear; },
       [](S& s, const V& v) { s.hvac.defrost_rear = as_bool(v); }});
  add({"hvac.recirculation", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.hvac.recirculation; },
       [](S& s, const V& v) { s.hvac.recirculation = as_bool(v); }});

  add({"media.playing", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.media.playing; },
       [](S& s, const V& v) { s.media.playing = as_bool(v); }});
  add({"media.volume", SignalType::Int, 0, 100, 5, {}, true,
       [](const S& s) -> V { return s.media.volume; },
       [](S& s, const V& v) { s.media.volume = as_int(v); }});
  add({"media.source", SignalType::Enum, 0, 0, 1, names_of(kSourceNames), true,
       [](const S& s) -> V { return std::string(to_string(s.media.source)); },
       [](S& s, const V& v) { s.media.source = enum_from_name<MediaSource>(kSourceNames, as_text(v)); }});
  add({"media.track_id", SignalType::Text, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.media.track_id; },
       [](S& s, const V& v) { s.media.track_id = as_text(v); }});

  add({"nav.destination", SignalType::OptText, 0, 0, 1, {}, true,
       [](const S& s) -> V {
         if (s.nav.destination) return *s.nav.destination;
         return std::monostate{};
       },
       [](S& s, const V& v) {
         if (std::holds_alternative<std::monostate>(v)) {
           s.nav.destination.reset();
         } else {
           s.nav.destination = as_text(v);
         }
       }});
  add({"nav.route_active", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.nav.route_active; },
       [](S& s, const V& v) { s.nav.route_active = as_bool(v); }});
  add({"nav.rerouting", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.nav.rerouting; },
       [](S& s, const V& v) { s.nav.rerouting = as_bool(v); }});

  add({"system.screen_brightness", SignalType::Int, 0, 100, 10, {}, true,
       [](const S& s) -> V { return s.system.screen_brightness; },
       [](S& s, const V& v) { s.system.screen_brightness = as_int(v); }});
  add({"system.sim_clock", SignalType::Real, 0, kHuge, 0.1, {}, false,
       [](const S& s) -> V { return s.system.sim_clock; },
       [](S& s, const V& v) { s.system.sim_clock = as_real(v); }});
  add({"system.language", SignalType::Text, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.system.language; },
       [](S& s, const V& v) { s.system.language = as_text(v); }});

  add({"comms.call_active", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.comms.call_active; },
       [](S& s, const V& v) { s.comms.call_active = as_bool(v); }});
  add({"comms.unread_messages", SignalType::Int, 0, 999, 1, {}, true,
       [](const S& s) -> V { return s.comms.unread_messages; },
       [](S& s, const V& v) { s.comms.unread_messages = as_int(v); }});

  add({"safety.notification_center_open", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.safety.notification_center_open; },
       [](S& s, const V& v) { s.safety.notification_center_open = as_bool(v); }});
  // Derived from the alert list; never serialized or set directly.
  add({"safety.active_alert_count", SignalType::Int, 0, kHuge, 1, {}, false,
       [](const S& s) -> V { return static_cast<std::int64_t>(s.safety.active_alerts.size()); },
       nullptr});

  add({"motion.speed_kmh", SignalType::Real, 0, 300, 0.1, {}, true,
       [](const S& s) -> V { return s.motion.speed_kmh; },
       [](S& s, const V& v) { s.motion.speed_kmh = as_real(v); }});
  add({"motion.high_beams", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.motion.high_beams; },
       [](S& s, const V& v) { s.motion.high_beams = as_bool(v); }});
  add({"motion.fog_lights", SignalType::Bool, 0, 0, 1, {}, true,
       [](const S& s) -> V { return s.motion.fog_lights; },
       [](S& s, const V& v) { s.motion.fog_lights = as_bool(v); }});
  add({"motion.wiper_level", SignalType::Int, 0, 3, 1, {}, true,
       [](const S& s) -> V { return s.motion.wiper_level; },
       [](S& s, const V& v) { s.motion.wiper_level = as_int(v); }});

  add({"phenomenon.weather", SignalType::Enum, 0, 0, 1, names_of(kWeatherNames), false,
       [](const S& s) -> V { return std::string(to_string(s.phenomenon.weather)); },
       [](S& s, const V& v) { s.phenomenon.weather = enum_from_name<Weather>(kWeatherNames, as_text(v)); }});
  add({"phenomenon.visibility_m", SignalType::Real, 0.1, 100000, 0.1, {}, false,
       [](const S& s) -> V { return s.phenomenon.visibility_m; },
       [](S& s, const V& v) { s.phenomenon.visibility_m = as_real(v); }});
  add({"phenomenon.ambient_temp_c", SignalType::Real, -60, 60, 0.1, {}, false,
       [](const S& s) -> V { return s.phenomenon.ambient_temp_c; },
       [](S& s, const V& v) { s.phenomenon.ambient_temp_c = as_real(v); }});
  add({"phenomenon.humidity_pct", SignalType::Int, 0, 100, 1, {}, false,
       [](const S& s) -> V { return s.phenomenon.humidity_pct; },
       [](S& s, const V& v) { s.phenomenon.humidity_pct = as_int(v); }});
  add({"phenomenon.fog_front_window", SignalType::Bool, 0, 0, 1, {}, false,
       [](const S& s) -> V { return s.phenomenon.fog_front_window; },
       [](S& s, const V& v) { s.phenomenon.fog_front_window = as_bool(v); }});
  add({"phenomenon.fog_rear_window", SignalType::Bool, 0, 0, 1, {}, false,
       [](const S& s) -> V { return s.phenomenon.fog_rear_window; },
       [](S& s, const V& v) { s.phenomenon.fog_rear_window = as_bool(v); }});

  add({"road.road_type", SignalType::Enum, 0, 0, 1, names_of(kRoadNames), false,
       [](const S& s) -> V { return std::string(to_string(s.road.road_type)); },
       [](S& s, const V& v) { s.road.road_type = enum_from_name<RoadType>(kRoadNames, as_text(v)); }});
  add({"road.posted_limit_kmh", SignalType::Int, 1, 300, 1, {}, false,
       [](const S& s) -> V { return s.road.posted_limit_kmh; },
       [](S& s, const V& v) { s.road.posted_limit_kmh = as_int(v); }});
  return t;
}

const SignalInfo& require_signal(std::string_view path) {
  const auto* info = find_signal(path);
  if (info == nullptr) throw Error(ErrorCode::UnknownSignal, std::string(path));
  return *info;
}

double snap_real(const SignalInfo& info, double v) {
  v = std::clamp(v, info.min, info.max);
  double snapped = info.min + std::round((v - info.min) / info.step) * info.step;
  return quantize_tenth(std::clamp(snapped, info.min, info.max));
}

// Converts a literal to the signal's value type, clamping numbers into range.
Value coerce(const SignalInfo& info, const Value& v) {
  auto mismatch = [&]() -> Error {
    return Error(ErrorCode::TypeMismatch,
                 std::string(info.path) + " cannot take " + value_to_json(v).dump());
  };
  switch (info.type) {
    case SignalType::Bool:
      if (!std::holds_alternative<bool>(v)) throw mismatch();
      return v;
    case SignalType::Int: {
      auto n = as_number(v);
      if (!n || std::fabs(*n - std::round(*n)) > 1e-9) throw mismatch();
      auto clamped = std::clamp(std::round(*n), info.min, info.max);
      return static_cast<std::int64_t>(clamped);
    }
    case SignalType::Real: {
      auto n = as_number(v);
      if (!n || !std::isfinite(*n)) throw mismatch();
      return snap_real(info, *n);
    }
    case SignalType::Enum: {
      const auto* s = std::get_if<std::string>(&v);
      if (s == nullptr) throw mismatch();
      if (std::find(info.enum_values.begin(), info.enum_values.end(), *s) == info.enum_values.end()) {
        throw mismatch();
      }
      return v;
    }
    case SignalType::Text:
      if (!std::holds_alternative<std::string>(v)) throw mismatch();
      return v;
    case SignalType::OptText:
      if (!std::holds_alternative<std::string>(v) && !std::holds_alternative<std::monostate>(v)) {
        throw mismatch();
      }
      return v;
  }
  throw mismatch();
}

void apply_fog_rule(VehicleState& s) {
  auto& ph = s.phenomenon;
  bool fog_prone = ph.humidity_pct >= kFogRule.humidity_min_pct &&
                   s.hvac.setpoint_c - ph.ambient_temp_c >= kFogRule.cabin_ambient_gap_c;
  if (s.hvac.defrost_front) {
    ph.fog_front_window = false;
  } else if (fog_prone) {
    ph.fog_front_window = true;
  }
  if (s.hvac.defrost_rear) {
    ph.fog_rear_window = false;
  } else if (fog_prone) {
    ph.fog_rear_window = true;
  }
}

std::string alerts_to_json(const std::vector<AlertRecord>& alerts) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : alerts) {
    arr.push_back({{"kind", a.kind}, {"message", a.message}, {"raised_at", value_to_string(a.raised_at)}});
  }
  return arr.dump();
}

}  // namespace

std::string_view to_string(AcMode v) { return kAcModeNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(MediaSource v) { return kSourceNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(Weather v) { return kWeatherNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(RoadType v) { return kRoadNames[static_cast<std::size_t>(v)]; }

std::span<const SignalInfo> signal_table() {
  static const std::vector<SignalInfo> table = build_table();
  return table;
}

const SignalInfo* find_signal(std::string_view path) {
  for (const auto& info : signal_table()) {
    if (info.path == path) return &info;
  }
  return nullptr;
}

std::string_view to_string(ControlOp op) {
  switch (op) {
    case ControlOp::Set: return "Set";
    case ControlOp::Increment: return "Increment";
    case ControlOp::Decrement: return "Decrement";
    case ControlOp::Toggle: return "Toggle";
  }
  return "?";
}

std::optional<ControlOp> parse_control_op(std::string_view text) {
  if (text == "Set" || text == "set") return ControlOp::Set;
  if (text == "Increment" || text == "increment") return ControlOp::Increment;
  if (text == "Decrement" || text == "decrement") return ControlOp::Decrement;
  if (text == "Toggle" || text == "toggle") return ControlOp::Toggle;
  return std::nullopt;
}

nlohmann::json to_json(const ControlCommand& cmd) {
  nlohmann::json j{{"target", cmd.target}, {"op", to_string(cmd.op)}};
  if (cmd.value) j["value"] = value_to_json(*cmd.value);
  return j;
}

ControlCommand control_command_from_json(const nlohmann::json& j) {
  ControlCommand cmd;
  cmd.target = j.at("target").get<std::string>();
  auto op = parse_control_op(j.at("op").get<std::string>());
  if (!op) throw Error(ErrorCode::ParseError, "bad control op " + j.at("op").dump());
  cmd.op = *op;
  if (j.contains("value")) cmd.value = value_from_json(j.at("value"));
  return cmd;
}

VehicleState override_signal(const VehicleState& state, std::string_view path, const Value& value) {
  const auto& info = require_signal(path);
  if (!info.set) throw Error(ErrorCode::ReadOnlySignal, std::string(path) + " is derived");
  VehicleState next = state;
  info.set(next, coerce(info, value));
  return next;
}

VehicleState apply_control(const VehicleState& state, const ControlCommand& cmd) {
  const auto& info = require_signal(cmd.target);
  if (!info.writable) throw Error(ErrorCode::ReadOnlySignal, cmd.target);

  VehicleState next = state;
  Value current = info.get(state);
  switch (cmd.op) {
    case ControlOp::Set:
      if (!cmd.value) throw Error(ErrorCode::TypeMismatch, "Set on " + cmd.target + " needs a value");
      info.set(next, coerce(info, *cmd.value));
      break;
    case ControlOp::Toggle:
      if (info.type != SignalType::Bool) throw Error(ErrorCode::TypeMismatch, "Toggle on non-boolean " + cmd.target);
      info.set(next, !as_bool(current));
      break;
    case ControlOp::Increment:
    case ControlOp::Decrement: {
      if (info.type != SignalType::Int && info.type != SignalType::Real) {
        throw Error(ErrorCode::TypeMismatch, std::string(to_string(cmd.op)) + " on non-numeric " + cmd.target);
      }
      double delta = cmd.op == ControlOp::Increment ? info.step : -info.step;
      if (cmd.value) {
        auto amount = as_number(*cmd.value);
        if (!amount) throw Error(ErrorCode::TypeMismatch, "non-numeric step for " + cmd.target);
        delta = cmd.op == ControlOp::Increment ? *amount : -*amount;
      }
      info.set(next, coerce(info, *as_number(current) + delta));
      break;
    }
  }

  // The only whitelisted cascade.
  if (cmd.target == "hvac.defrost_front" && next.hvac.defrost_front && next.hvac.fan_speed < 1) {
    next.hvac.fan_speed = 1;
  }
  return next;
}

ScenarioScript scenario_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_object() && j.contains("entries") ? j.at("entries") : j;
  if (!list.is_array()) throw Error(ErrorCode::ParseError, "scenario must be an array of entries");
  ScenarioScript script;
  for (const auto& e : list) {
    ScenarioEntry entry;
    entry.t_s = e.at("t_s").get<double>();
    if (e.contains("set")) {
      for (const auto& [path, value] : e.at("set").items()) {
        const auto& info = require_signal(path);
        // Validate type now so a bad script fails at load, not mid-episode.
        (void)coerce(info, value_from_json(value));
        entry.set.emplace_back(path, value_from_json(value));
      }
    }
    if (e.contains("alert")) {
      const auto& a = e.at("alert");
      entry.alert = AlertRecord{a.at("kind").get<std::string>(), a.at("message").get<std::string>(),
                                quantize_tenth(entry.t_s)};
    }
    script.entries.push_back(std::move(entry));
  }
  std::stable_sort(script.entries.begin(), script.entries.end(),
                   [](const ScenarioEntry& a, const ScenarioEntry& b) { return a.t_s < b.t_s; });
  return script;
}

nlohmann::json to_json(const ScenarioScript& script) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : script.entries) {
    nlohmann::json item{{"t_s", e.t_s}};
    nlohmann::json set = nlohmann::json::object();
    for (const auto& [path, value] : e.set) set[path] = value_to_json(value);
    item["set"] = set;
    if (e.alert) item["alert"] = {{"kind", e.alert->kind}, {"message", e.alert->message}};
    arr.push_back(std::move(item));
  }
  return arr;
}

VehicleState tick(const VehicleState& state, double dt, const ScenarioScript& script) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveDt, "dt=" + std::to_string(dt));
  VehicleState next = state;
  const double from = state.system.sim_clock;
  const double to = quantize_tenth(from + dt);
  for (const auto& entry : script.entries) {
    if (entry.t_s <= from || entry.t_s > to) continue;
    for (const auto& [path, value] : entry.set) next = override_signal(next, path, value);
    if (entry.alert) next.safety.active_alerts.push_back(*entry.alert);
  }
  next.system.sim_clock = to;
  apply_fog_rule(next);
  return next;
}

Value query_signal(const VehicleState& state, std::string_view path) {
  return require_signal(path).get(state);
}

std::string serialize_state(const VehicleState& state) {
  std::string out;
  for (const auto& info : signal_table()) {
    if (!info.set) continue;  // derived
    Value v = info.get(state);
    out += info.path;
    out += '=';
    switch (info.type) {
      case SignalType::Text:
      case SignalType::OptText:
        out += value_to_json(v).dump();
        break;
      default:
        out += value_to_string(v);
    }
    out += '\n';
  }
  out += "safety.active_alerts=";
  out += alerts_to_json(state.safety.active_alerts);
  out += '\n';
  return out;
}

VehicleState parse_state(std::string_view text) {
  VehicleState state;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "missing '=' in '" + line + "'");
    std::string path = line.substr(0, eq);
    std::string raw = line.substr(eq + 1);
    try {
      if (path == "safety.active_alerts") {
        state.safety.active_alerts.clear();
        for (const auto& a : nlohmann::json::parse(raw)) {
          state.safety.active_alerts.push_back(
              {a.at("kind").get<std::string>(), a.at("message").get<std::string>(),
               std::stod(a.at("raised_at").get<std::string>())});
        }
        continue;
      }
      const auto& info = require_signal(path);
      if (!info.set) throw Error(ErrorCode::ParseError, "derived signal " + path + " in state text");
      Value v;
      switch (info.type) {
        case SignalType::Bool:
          if (raw != "true" && raw != "false") throw Error(ErrorCode::ParseError, raw);
          v = raw == "true";
          break;
        case SignalType::Int: v = static_cast<std::int64_t>(std::stoll(raw)); break;
        case SignalType::Real: v = std::stod(raw); break;
        case SignalType::Enum: v = raw; break;
        case SignalType::Text:
        case SignalType::OptText: v = value_from_json(nlohmann::json::parse(raw)); break;
      }
      info.set(state, v);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path + ": " + e.what());
    } catch (const std::invalid_argument&) {
      throw Error(ErrorCode::ParseError, path + ": bad number '" + raw + "'");
    } catch (const std::bad_variant_access&) {
      throw Error(ErrorCode::ParseError, path + ": wrong value type '" + raw + "'");
    }
  }
  return state;
}

std::string StateDigest::hex() const { return to_hex(bytes); }

StateDigest snapshot_digest(const VehicleState& state) {
  return StateDigest{sha256(serialize_state(state))};
}

}  // namespace autocab
