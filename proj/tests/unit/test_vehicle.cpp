#include <gtest/gtest.h>

#include "autocab/digest.hpp"
#include "autocab/vehicle.hpp"
#include "support.hpp"

using namespace autocab;
using autocab::test::error_code_of;

TEST(Value, NumericComparisonCrossesIntAndReal) {
  EXPECT_TRUE(compare_values(std::int64_t{6}, Comparator::Eq, 6.0));
  EXPECT_TRUE(compare_values(22.0, Comparator::Ge, std::int64_t{22}));
  EXPECT_FALSE(compare_values(std::string("6"), Comparator::Eq, std::int64_t{6}));
  EXPECT_FALSE(compare_values(std::string("a"), Comparator::Ge, std::string("a")));
  EXPECT_TRUE(compare_values(std::monostate{}, Comparator::Ne, std::string("Home")));
}

TEST(Value, QuantizeDropsNegativeZero) {
  EXPECT_EQ(quantize_tenth(21.04), 21.0);
  EXPECT_EQ(quantize_tenth(21.05 + 1e-9), 21.1);
  EXPECT_FALSE(std::signbit(quantize_tenth(-0.01)));
  EXPECT_EQ(value_to_string(Value{-0.04}), "0.0");
}

TEST(Value, JsonRoundTrip) {
  for (const Value& v : {Value{}, Value{true}, Value{std::int64_t{-3}}, Value{2.5}, Value{std::string("x")}}) {
    EXPECT_EQ(value_from_json(value_to_json(v)), v);
  }
  EXPECT_EQ(error_code_of([] { value_from_json(nlohmann::json::array()); }), ErrorCode::TypeMismatch);
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::string text = "hello";
  EXPECT_EQ(base64_encode({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}), "aGVsbG8=");
}

TEST(Vehicle, DefaultsAreCanonical) {
  VehicleState s;
  EXPECT_EQ(query_signal(s, "hvac.setpoint_c"), Value{21.0});
  EXPECT_EQ(query_signal(s, "hvac.fan_speed"), Value{std::int64_t{2}});
  EXPECT_EQ(query_signal(s, "nav.destination"), Value{});
  EXPECT_EQ(query_signal(s, "safety.active_alert_count"), Value{std::int64_t{0}});
}

TEST(Vehicle, IncrementClampsAtMax) {
  VehicleState s;
  for (int i = 0; i < 10; ++i) s = apply_control(s, {"hvac.fan_speed", ControlOp::Increment, {}});
  EXPECT_EQ(s.hvac.fan_speed, 6);
  s = apply_control(s, {"hvac.setpoint_c", ControlOp::Set, Value{22.3}});
  EXPECT_DOUBLE_EQ(s.hvac.setpoint_c, 22.5);
}

TEST(Vehicle, ControlErrors) {
  VehicleState s;
  EXPECT_EQ(error_code_of([&] { apply_control(s, {"phenomenon.visibility_m", ControlOp::Set, Value{10.0}}); }),
            ErrorCode::ReadOnlySignal);
  EXPECT_EQ(error_code_of([&] { apply_control(s, {"hvac.nope", ControlOp::Set, Value{1.0}}); }),
            ErrorCode::UnknownSignal);
  EXPECT_EQ(error_code_of([&] { apply_control(s, {"hvac.fan_speed", ControlOp::Toggle, {}}); }),
            ErrorCode::TypeMismatch);
  EXPECT_EQ(error_code_of([&] { apply_control(s, {"media.source", ControlOp::Set, Value{std::string("Tape")}}); }),
            ErrorCode::TypeMismatch);
}

TEST(Vehicle, FrontDefrostRaisesIdleFan) {
  VehicleState s;
  s.hvac.fan_speed = 0;
  s = apply_control(s, {"hvac.defrost_front", ControlOp::Toggle, {}});
  EXPECT_TRUE(s.hvac.defrost_front);
  EXPECT_EQ(s.hvac.fan_speed, 1);
}

TEST(Vehicle, TickRejectsNonPositiveDt) {
  EXPECT_EQ(error_code_of([] { tick(VehicleState{}, 0.0, {}); }), ErrorCode::NonPositiveDt);
  EXPECT_EQ(error_code_of([] { tick(VehicleState{}, -1.0, {}); }), ErrorCode::NonPositiveDt);
}

TEST(Vehicle, ScenarioFiresInsideWindowOnly) {
  ScenarioScript script = scenario_from_json(nlohmann::json::parse(
      R"([{"t_s": 2.0, "set": {"comms.unread_messages": 5}, "alert": {"kind": "message", "message": "m"}}])"));
  VehicleState s;
  s = tick(s, 1.0, script);
  EXPECT_EQ(s.comms.unread_messages, 0);
  s = tick(s, 1.0, script);
  EXPECT_EQ(s.comms.unread_messages, 5);
  ASSERT_EQ(s.safety.active_alerts.size(), 1u);
  s.comms.unread_messages = 0;
  s = tick(s, 1.0, script);
  EXPECT_EQ(s.comms.unread_messages, 0);
  EXPECT_DOUBLE_EQ(s.system.sim_clock, 3.0);
}

TEST(Vehicle, WindowsFogWhenHumidAndWarmInside) {
  VehicleState s;
  s = override_signal(s, "phenomenon.humidity_pct", std::int64_t{90});
  s = override_signal(s, "phenomenon.ambient_temp_c", 5.0);
  s = tick(s, 1.0, {});
  EXPECT_TRUE(s.phenomenon.fog_front_window);
  s = apply_control(s, {"hvac.defrost_front", ControlOp::Set, Value{true}});
  s = tick(s, 1.0, {});
  EXPECT_FALSE(s.phenomenon.fog_front_window);
  EXPECT_TRUE(s.phenomenon.fog_rear_window);
}

TEST(Vehicle, SerializeRoundTripsRandomStates) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto s = autocab::test::random_state(rng);
    const auto back = parse_state(serialize_state(s));
    EXPECT_EQ(serialize_state(back), serialize_state(s));
    EXPECT_EQ(snapshot_digest(back), snapshot_digest(s));
  }
}

TEST(Vehicle, DigestSeesEverySignal) {
  const auto base = snapshot_digest(VehicleState{});
  VehicleState s;
  s.media.volume = 35;
  EXPECT_NE(snapshot_digest(s), base);
  VehicleState t;
  t.safety.active_alerts.push_back({"x", "y", 1.0});
  EXPECT_NE(snapshot_digest(t), base);
}
