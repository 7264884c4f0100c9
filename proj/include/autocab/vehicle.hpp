#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autocab/value.hpp"

namespace autocab {

enum class AcMode { Off, Manual, Auto };
enum class MediaSource { Radio, Bluetooth, USB, Streaming };
enum class Weather { Clear, Rain, Fog, Snow, Heat };
enum class RoadType { Urban, Highway, Rural };

struct AlertRecord {
  std::string kind;
  std::string message;
  double raised_at = 0.0;

  bool operator==(const AlertRecord&) const = default;
};

struct HvacState {
  double setpoint_c = 21.0;
  std::int64_t fan_speed = 2;  // 6 == "Max"
  AcMode ac_mode = AcMode::Manual;
  std::int64_t seat_heater_driver = 0;
  std::int64_t seat_heater_passenger = 0;
  bool defrost_front = false;
  bool defrost_rear = false;
  bool recirculation = false;
  bool operator==(const HvacState&) const = default;
};

struct MediaState {
  bool playing = false;
  std::int64_t volume = 30;
  MediaSource source = MediaSource::Radio;
  std::string track_id = "track-001";
  bool operator==(const MediaState&) const = default;
};

struct NavState {
  std::optional<std::string> destination;
  bool route_active = false;
  bool rerouting = false;
  bool operator==(const NavState&) const = default;
};

struct SystemState {
  std::int64_t screen_brightness = 60;
  double sim_clock = 0.0;  // seconds since kSimEpoch
  std::string language = "en-US";
  bool operator==(const SystemState&) const = default;
};

struct CommsState {
  bool call_active = false;
  std::int64_t unread_messages = 0;
  bool operator==(const CommsState&) const = default;
};

struct SafetyState {
  bool notification_center_open = false;
  std::vector<AlertRecord> active_alerts;
  bool operator==(const SafetyState&) const = default;
};

struct MotionState {
  double speed_kmh = 0.0;
  bool high_beams = false;
  bool fog_lights = false;
  std::int64_t wiper_level = 0;
  bool operator==(const MotionState&) const = default;
};

struct PhenomenonState {
  Weather weather = Weather::Clear;
  double visibility_m = 10000.0;
  double ambient_temp_c = 20.0;
  std::int64_t humidity_pct = 50;
  bool fog_front_window = false;
  bool fog_rear_window = false;
  bool operator==(const PhenomenonState&) const = default;
};

struct RoadState {
  RoadType road_type = RoadType::Urban;
  std::int64_t posted_limit_kmh = 50;
  bool operator==(const RoadState&) const = default;
};

// Ground truth for every cockpit subsystem and the driving environment.
// A default-constructed value is the canonical default state.
struct VehicleState {
  HvacState hvac;
  MediaState media;
  NavState nav;
  SystemState system;
  CommsState comms;
  SafetyState safety;
  MotionState motion;
  PhenomenonState phenomenon;
  RoadState road;

  bool operator==(const VehicleState&) const = default;
};

// Wall-clock meaning of sim_clock == 0.
inline constexpr std::string_view kSimEpoch = "2024-01-01T08:00:00";

enum class SignalType { Bool, Int, Real, Enum, Text, OptText };

struct SignalInfo {
  std::string_view path;
  SignalType type;
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;  // increment size; Real values also snap to it
  std::vector<std::string_view> enum_values;
  bool writable = true;  // by agents, through ControlCommand
  std::function<Value(const VehicleState&)> get;
  std::function<void(VehicleState&, const Value&)> set;
};

// All signals in canonical declaration order.
std::span<const SignalInfo> signal_table();
const SignalInfo* find_signal(std::string_view path);

enum class ControlOp { Set, Increment, Decrement, Toggle };

std::string_view to_string(ControlOp op);
std::optional<ControlOp> parse_control_op(std::string_view text);

struct ControlCommand {
  std::string target;
  ControlOp op = ControlOp::Set;
  std::optional<Value> value;

  bool operator==(const ControlCommand&) const = default;
};

nlohmann::json to_json(const ControlCommand& cmd);
ControlCommand control_command_from_json(const nlohmann::json& j);

// Environment thresholds for spontaneous window fogging.
struct FogRule {
  std::int64_t humidity_min_pct = 85;
  double cabin_ambient_gap_c = 8.0;  // setpoint_c - ambient_temp_c
};

inline constexpr FogRule kFogRule{};

struct ScenarioEntry {
  double t_s = 0.0;
  std::vector<std::pair<std::string, Value>> set;  // file order is kept
  std::optional<AlertRecord> alert;                // raised_at = t_s
};

// Entries are kept sorted by t_s (stable with respect to file order).
struct ScenarioScript {
  std::vector<ScenarioEntry> entries;
};

ScenarioScript scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioScript& script);

VehicleState apply_control(const VehicleState& state, const ControlCommand& cmd);

// Sets any signal (including read-only environment ones), with range
// clamping and type checks but without cascades. Used by scenario scripts
// and task initialization.
VehicleState override_signal(const VehicleState& state, std::string_view path, const Value& value);

VehicleState tick(const VehicleState& state, double dt, const ScenarioScript& script);

Value query_signal(const VehicleState& state, std::string_view path);

// Canonical text form: one `path=value` line per signal, declaration order,
// reals with one decimal, text as JSON strings.
std::string serialize_state(const VehicleState& state);
VehicleState parse_state(std::string_view text);

struct StateDigest {
  std::array<std::uint8_t, 32> bytes{};

  std::string hex() const;
  bool operator==(const StateDigest&) const = default;
};

StateDigest snapshot_digest(const VehicleState& state);

std::string_view to_string(AcMode v);
std::string_view to_string(MediaSource v);
std::string_view to_string(Weather v);
std::string_view to_string(RoadType v);

}  // namespace autocab
