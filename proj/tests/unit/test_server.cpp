#include <gtest/gtest.h>

#include <thread>

#include <unistd.h>

#include "autocab/server.hpp"
#include "support.hpp"

using namespace autocab;

namespace {

std::shared_ptr<const Assets> A() { return autocab::test::assets(); }

std::string code_of(const nlohmann::json& frame) {
  return frame.value("type", std::string()) == "err" ? frame.value("code", std::string()) : std::string();
}

nlohmann::json one(SessionHandler& h, const nlohmann::json& frame) {
  auto out = h.handle(frame.dump());
  EXPECT_EQ(out.size(), 1u) << frame.dump();
  return out.empty() ? nlohmann::json() : out.front();
}

int index_of(const nlohmann::json& obs, const std::string& rid) {
  std::function<int(const nlohmann::json&)> walk = [&](const nlohmann::json& node) -> int {
    if (node.value("resource_id", std::string()) == rid) return node.value("som_index", 0);
    if (node.contains("children")) {
      for (const auto& c : node.at("children")) {
        if (int i = walk(c)) return i;
      }
    }
    return 0;
  };
  return walk(obs.at("a11y").at("root"));
}

}  // namespace

TEST(Server, HelloAnnouncesVersions) {
  SessionHandler h(A(), {});
  const auto hello = h.hello();
  EXPECT_EQ(hello["type"], "hello");
  EXPECT_EQ(hello["proto"], kProtocolVersion);
  EXPECT_EQ(hello["suite_version"], A()->suite.suite_version);
  EXPECT_EQ(one(h, {{"type", "hello"}}), hello);
}

TEST(Server, ErrorCodes) {
  autocab::test::TempDir dir;
  SessionHandler h(A(), {.trace_dir = dir.str()});
  EXPECT_EQ(code_of(h.handle("not json").front()), "bad_frame");
  EXPECT_EQ(code_of(h.handle("[1, 2]").front()), "bad_frame");
  EXPECT_EQ(code_of(one(h, {{"kind", "start"}})), "bad_frame");
  EXPECT_EQ(code_of(one(h, {{"type", "dance"}})), "unknown_type");
  EXPECT_EQ(code_of(one(h, {{"type", "act"}, {"action", {{"type", "wait"}}}})), "session_inactive");
  EXPECT_EQ(code_of(one(h, {{"type", "end"}})), "session_inactive");
  EXPECT_EQ(code_of(one(h, {{"type", "start"}, {"template_id", "nope"}})), "task_not_found");
  EXPECT_EQ(code_of(one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}, {"region", "atlantis"}})),
            "unknown_region");
  EXPECT_EQ(code_of(one(h, {{"type", "start"}, {"template_id", "da_paris_overspeed"}, {"region", "default"}})),
            "geo_mismatch");
  EXPECT_EQ(code_of(one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}, {"seed", -1}})), "bad_frame");
  EXPECT_EQ(code_of(one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}, {"max_steps", 0}})),
            "bad_frame");
  EXPECT_EQ(code_of(one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}, {"modalities", 7}})),
            "bad_modalities");
  EXPECT_EQ(code_of(one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}, {"modalities", {"smell"}}})),
            "bad_modalities");
  EXPECT_FALSE(h.active());
  EXPECT_EQ(one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}})["type"], "obs");
  EXPECT_EQ(code_of(one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}})), "session_active");
}

TEST(Server, FullEpisodeWritesAReplayableTrace) {
  autocab::test::TempDir dir;
  SessionHandler h(A(), {.trace_dir = dir.str()});
  auto obs = one(h, {{"type", "start"},
                     {"template_id", "ec_fan_speed_max"},
                     {"seed", 2},
                     {"modalities", {"a11y", "screen"}},
                     {"agent", {{"variant", "test"}, {"backend", "unit"}}}});
  ASSERT_EQ(obs["type"], "obs");
  EXPECT_TRUE(obs.contains("som_png_b64"));
  EXPECT_TRUE(obs.contains("digest"));
  const int nav = index_of(obs, "screen.HVAC");
  ASSERT_GT(nav, 0);
  obs = one(h, {{"type", "act"}, {"action", {{"type", "tap"}, {"index", nav}}}, {"reasoning", "open climate"}});
  EXPECT_EQ(obs["screen_id"], "HVAC");
  const auto bad = one(h, {{"type", "act"}, {"action", {{"type", "moonwalk"}}}});
  EXPECT_EQ(bad["type"], "obs");
  EXPECT_EQ(bad["event"].get<std::string>().rfind("invalid_action", 0), 0u);
  const auto out = h.handle(nlohmann::json{{"type", "act"}, {"action", {{"type", "status"}, {"value", "Complete"}}}}.dump());
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1]["type"], "done");
  EXPECT_EQ(out[1]["reward"], 0);
  EXPECT_EQ(out[1]["steps"], 3);
  EXPECT_EQ(out[1]["terminated_by"], "Status");
  ASSERT_EQ(h.written_traces().size(), 1u);
  const auto trace = read_trace(h.written_traces()[0]);
  EXPECT_EQ(trace.header.variant, "test");
  EXPECT_EQ(trace.steps[0].reasoning, "open climate");
  EXPECT_EQ(replay(trace, A()), trace.outcome);
  EXPECT_EQ(code_of(one(h, {{"type", "act"}, {"action", {{"type", "wait"}}}})), "session_inactive");
}

TEST(Server, ClientEndAbortsWithZeroReward) {
  autocab::test::TempDir dir;
  SessionHandler h(A(), {.trace_dir = dir.str()});
  one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}});
  one(h, {{"type", "act"}, {"action", {{"type", "wait"}}}});
  const auto done = one(h, {{"type", "end"}});
  EXPECT_EQ(done["type"], "done");
  EXPECT_EQ(done["terminated_by"], "ClientEnd");
  EXPECT_EQ(done["reward"], 0);
  const auto trace = read_trace(done["trace"].get<std::string>());
  EXPECT_EQ(replay(trace, A()), trace.outcome);
}

TEST(Server, IdleSessionsTimeOut) {
  autocab::test::TempDir dir;
  double clock = 0.0;
  ServerOptions options{.trace_dir = dir.str(), .idle_timeout_s = 10.0, .clock = [&clock] { return clock; }};
  SessionHandler h(A(), options);
  one(h, {{"type", "start"}, {"template_id", "ec_fan_speed_max"}});
  clock = 9.0;
  EXPECT_FALSE(h.idle_expired());
  clock = 10.5;
  EXPECT_TRUE(h.idle_expired());
  const auto done = h.close(Termination::Timeout);
  ASSERT_TRUE(done.has_value());
  EXPECT_EQ((*done)["terminated_by"], "Timeout");
  const auto trace = read_trace((*done)["trace"].get<std::string>());
  EXPECT_EQ(trace.outcome.terminated_by, Termination::Timeout);
  EXPECT_EQ(replay(trace, A()), trace.outcome);
  EXPECT_FALSE(h.close(Termination::Timeout).has_value());
}

TEST(Server, TraceDirFallsBackToEnvironment) {
  EXPECT_EQ(resolve_trace_dir("x"), "x");
  ::setenv("AUTOCAB_TRACE_DIR", "/tmp/from-env", 1);
  EXPECT_EQ(resolve_trace_dir(""), "/tmp/from-env");
  ::unsetenv("AUTOCAB_TRACE_DIR");
  EXPECT_EQ(resolve_trace_dir(""), "traces");
}

TEST(Server, ConcurrentTcpSessionsAreIndependent) {
  autocab::test::TempDir dir;
  Server server(A(), {.trace_dir = dir.str(), .include_png = false});
  server.bind("127.0.0.1", 0);
  server.start();
  auto client = [&](const std::string& tmpl, int waits, nlohmann::json& done) {
    auto conn = LineConn::connect("127.0.0.1", server.port());
    std::string line;
    ASSERT_EQ(conn.read_line(line, 5.0), LineConn::Status::Line);
    ASSERT_EQ(nlohmann::json::parse(line)["type"], "hello");
    conn.send_line(nlohmann::json{{"type", "start"}, {"template_id", tmpl}}.dump());
    ASSERT_EQ(conn.read_line(line, 5.0), LineConn::Status::Line);
    for (int i = 0; i < waits; ++i) {
      conn.send_line(nlohmann::json{{"type", "act"}, {"action", {{"type", "wait"}}}}.dump());
      ASSERT_EQ(conn.read_line(line, 5.0), LineConn::Status::Line);
    }
    conn.send_line(nlohmann::json{{"type", "end"}}.dump());
    ASSERT_EQ(conn.read_line(line, 5.0), LineConn::Status::Line);
    done = nlohmann::json::parse(line);
  };
  nlohmann::json a, b;
  std::thread ta([&] { client("ec_fan_speed_max", 3, a); });
  std::thread tb([&] { client("ec_set_volume", 5, b); });
  ta.join();
  tb.join();
  server.stop();
  EXPECT_EQ(a["steps"], 3);
  EXPECT_EQ(b["steps"], 5);
  EXPECT_NE(a["trace"], b["trace"]);
}

TEST(Server, ServesOverPipes) {
  autocab::test::TempDir dir;
  int to_server[2], from_server[2];
  ASSERT_EQ(::pipe(to_server), 0);
  ASSERT_EQ(::pipe(from_server), 0);
  std::thread t([&] {
    LineConn conn(to_server[0], from_server[1]);
    SessionHandler h(A(), {.trace_dir = dir.str()});
    serve_connection(conn, h);
  });
  {
    LineConn client(from_server[0], to_server[1]);
    std::string line;
    ASSERT_EQ(client.read_line(line, 5.0), LineConn::Status::Line);
    EXPECT_EQ(nlohmann::json::parse(line)["type"], "hello");
    client.send_line(nlohmann::json{{"type", "start"}, {"template_id", "ec_end_call"}}.dump());
    ASSERT_EQ(client.read_line(line, 5.0), LineConn::Status::Line);
    EXPECT_EQ(nlohmann::json::parse(line)["type"], "obs");
    client.send_line(nlohmann::json{{"type", "act"}, {"action", {{"type", "wait"}}}}.dump());
    ASSERT_EQ(client.read_line(line, 5.0), LineConn::Status::Line);
  }
  t.join();
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) files += e.path().extension() == ".jsonl";
  EXPECT_EQ(files, 1u);
}
