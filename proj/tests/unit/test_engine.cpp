#include <gtest/gtest.h>

#include <fstream>

#include "autocab/agents.hpp"
#include "autocab/digest.hpp"
#include "autocab/engine.hpp"
#include "support.hpp"

using namespace autocab;
using autocab::test::error_code_of;

namespace {

std::shared_ptr<const Assets> A() { return autocab::test::assets(); }

TaskInstance make(const std::string& id, std::uint64_t seed = 0) {
  const auto& t = A()->suite.require(id);
  return instantiate(t, seed, choose_region(t, A()->kb));
}

const UiNode* node_for(const Observation& obs, const std::string& rid) {
  for (const auto* n : interactable_nodes(*obs.a11y)) {
    if (resource_id(*n) == rid) return n;
  }
  return nullptr;
}

EpisodeTrace scripted_trace(const std::string& id, Variant v = Variant::ASURADA, std::uint64_t seed = 0) {
  AgentConfig config;
  config.variant = v;
  auto agent = make_agent(config, A());
  return run_episode(*agent, make(id, seed), A());
}

}  // namespace

TEST(Engine, ResetIsDeterministic) {
  Environment a(A()), b(A());
  const auto inst = make("ec_set_temperature", 2);
  const ModalityConfig full{true, true, true};
  EXPECT_EQ(observation_digest(a.reset(inst, full)), observation_digest(b.reset(inst, full)));
  EXPECT_EQ(a.steps_used(), 0);
  EXPECT_TRUE(a.active());
}

TEST(Engine, GpsModalityGatesRoadSignals) {
  Environment env(A());
  const auto inst = make("ec_fan_speed_max");
  auto obs = env.reset(inst, ModalityConfig{true, false, false});
  EXPECT_FALSE(obs.gps.has_value());
  EXPECT_EQ(obs.signal("road.road_type"), nullptr);
  EXPECT_FALSE(obs.has_screen());
  EXPECT_EQ(error_code_of([&] { obs.screen(); }), ErrorCode::ModalityViolation);
  obs = env.reset(inst, ModalityConfig{true, true, true});
  EXPECT_TRUE(obs.gps.has_value());
  EXPECT_NE(obs.signal("road.road_type"), nullptr);
  EXPECT_NE(obs.signal("motion.speed_kmh"), nullptr);
}

TEST(Engine, FanMaxByTapping) {
  Environment env(A());
  auto obs = env.reset(make("ec_fan_speed_max"), ModalityConfig{});
  const auto* nav = node_for(obs, "screen.HVAC");
  ASSERT_NE(nav, nullptr);
  obs = env.step(TapAction{nav->som_index}).obs;
  EXPECT_EQ(obs.screen_id, ScreenId::HVAC);
  for (int i = 0; i < 6 && env.state().hvac.fan_speed < 6; ++i) {
    const UiNode* plus = nullptr;
    for (const auto* n : interactable_nodes(*obs.a11y)) {
      if (n->role == Role::Button && n->binding.signal == "hvac.fan_speed" && n->binding.op == ControlOp::Increment)
        plus = n;
    }
    ASSERT_NE(plus, nullptr);
    obs = env.step(TapAction{plus->som_index}).obs;
  }
  EXPECT_EQ(env.state().hvac.fan_speed, 6);
  const auto done = env.step(StatusAction{TaskStatus::Complete});
  EXPECT_TRUE(done.done);
  EXPECT_EQ(done.reward, 1);
  EXPECT_EQ(env.termination(), Termination::Status);
}

TEST(Engine, CompleteOnUnsatisfiedScoresZero) {
  Environment env(A());
  env.reset(make("ec_fan_speed_max"), ModalityConfig{});
  const auto r = env.step(StatusAction{TaskStatus::Complete});
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.reward, 0);
  EXPECT_EQ(env.steps_used(), 1);
  EXPECT_EQ(error_code_of([&] { env.step(WaitAction{}); }), ErrorCode::SessionInactive);
}

TEST(Engine, StepBudgetEndsTheEpisode) {
  Environment env(A());
  auto inst = make("ec_fan_speed_max");
  inst.max_steps = 3;
  env.reset(inst, ModalityConfig{});
  EXPECT_FALSE(env.step(WaitAction{}).done);
  EXPECT_FALSE(env.step(WaitAction{}).done);
  const auto r = env.step(WaitAction{});
  EXPECT_TRUE(r.done);
  EXPECT_EQ(env.termination(), Termination::MaxSteps);
  EXPECT_EQ(r.reward, 0);
}

TEST(Engine, InvalidActionsConsumeAStep) {
  Environment env(A());
  env.reset(make("ec_fan_speed_max"), ModalityConfig{});
  auto r = env.step(InvalidAction{"garbled", "???"});
  EXPECT_FALSE(r.done);
  EXPECT_EQ(env.steps_used(), 1);
  EXPECT_EQ(r.obs.event.rfind("invalid_action", 0), 0u);
  r = env.step(TapAction{999});
  EXPECT_NE(r.obs.event.find("UnknownSomIndex"), std::string::npos);
  r = env.step(ApiCallAction{"format_disk", {}});
  EXPECT_NE(r.obs.event.find("SchemaViolation"), std::string::npos);
  EXPECT_EQ(env.steps_used(), 3);
}

TEST(Engine, ApiCallsOpenTheSafetyCenter) {
  Environment env(A());
  env.reset(make("ec_open_safety_app"), ModalityConfig{});
  auto r = env.step(ApiCallAction{"open_safety_center", {}});
  EXPECT_EQ(r.obs.screen_id, ScreenId::SafetyCenter);
  EXPECT_TRUE(env.state().safety.notification_center_open);
  r = env.step(ApiCallAction{"raise_safety_alert", {{"message", "slow down"}}});
  EXPECT_EQ(r.obs.event, "api_call: raise_safety_alert");
  EXPECT_EQ(env.step(StatusAction{TaskStatus::Complete}).reward, 1);
}

TEST(Engine, ActionJsonRoundTrips) {
  const std::vector<Action> actions{TapAction{3, 0, 0},
                                    TapAction{std::nullopt, 100, 200},
                                    SwipeAction{1, 2, 3, 4},
                                    InputTextAction{5, "Gare de Lyon"},
                                    ApiCallAction{"raise_safety_alert", {{"message", "m"}}},
                                    StatusAction{TaskStatus::Infeasible},
                                    WaitAction{},
                                    InvalidAction{"r", "raw"}};
  for (const auto& a : actions) EXPECT_EQ(action_from_json(to_json(a)), a) << describe(a);
  EXPECT_EQ(action_from_json(nlohmann::json{{"type", "status"}, {"value", "COMPLETE"}}),
            Action{StatusAction{TaskStatus::Complete}});
  EXPECT_EQ(error_code_of([] { action_from_json(nlohmann::json{{"type", "teleport"}}); }),
            ErrorCode::SchemaViolation);
  EXPECT_EQ(error_code_of([] { action_from_json(nlohmann::json{{"type", "status"}, {"value", 1}}); }),
            ErrorCode::SchemaViolation);
}

TEST(Engine, TraceJsonlRoundTripsAndReplays) {
  auto trace = scripted_trace("ec_set_temperature", Variant::ASURADA, 1);
  EXPECT_EQ(trace.outcome.reward, 1);
  const auto text = trace_to_jsonl(trace);
  const auto back = trace_from_jsonl(text);
  EXPECT_EQ(trace_to_jsonl(back), text);
  EXPECT_EQ(replay(back, A()), trace.outcome);

  autocab::test::TempDir dir;
  const auto path = write_trace(trace, dir.str());
  EXPECT_EQ(trace_to_jsonl(read_trace(path)), text);
  EXPECT_EQ(error_code_of([] { trace_from_jsonl("{\"kind\":\"header\"}\n"); }), ErrorCode::ParseError);
}

TEST(Engine, MutatedTracesFailReplay) {
  const auto trace = scripted_trace("ec_fan_speed_max");
  ASSERT_GE(trace.steps.size(), 2u);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    auto bad = trace;
    bad.steps[i].action = WaitAction{};
    if (trace.steps[i].action == bad.steps[i].action) bad.steps[i].action = TapAction{std::nullopt, 5, 5};
    EXPECT_EQ(error_code_of([&] { replay(bad, A()); }), ErrorCode::DigestMismatch) << "step " << i;
  }
  auto bad = trace;
  bad.outcome.reward = 1 - bad.outcome.reward;
  EXPECT_EQ(error_code_of([&] { replay(bad, A()); }), ErrorCode::DigestMismatch);
}

TEST(Engine, ScreenDigestMatchesRenderedPixels) {
  Environment env(A());
  const auto obs = env.reset(make("ec_fan_speed_max"), ModalityConfig{true, true, false});
  ASSERT_TRUE(obs.has_screen());
  const auto px = obs.screen();
  EXPECT_EQ(obs.screen_sha, to_hex(sha256(px.data)));
  const auto wire = to_wire_json(obs, true);
  EXPECT_TRUE(wire.contains("som_png_b64"));
  EXPECT_FALSE(to_wire_json(obs, false).contains("som_png_b64"));
}

TEST(Engine, AgentFailureIsRecorded) {
  class Thrower : public AgentHandle {
   public:
    std::string variant() const override { return "T3A"; }
    std::string backend() const override { return "test"; }
    ModalityConfig modalities() const override { return {}; }
    void begin(const TaskInstance&) override {}
    AgentDecision act(const Observation&) override { throw std::runtime_error("boom"); }
    std::string reflect(const Observation&, const Action&, const Observation&) override { return {}; }
  } agent;
  const auto trace = run_episode(agent, make("ec_fan_speed_max"), A());
  EXPECT_EQ(trace.outcome.terminated_by, Termination::AgentFailure);
  EXPECT_EQ(trace.outcome.reward, 0);
  EXPECT_EQ(replay(trace, A()), trace.outcome);
}
