#include <gtest/gtest.h>

#include "autocab/bench.hpp"
#include "support.hpp"

using namespace autocab;
using autocab::test::error_code_of;

namespace {

std::shared_ptr<const Assets> A() { return autocab::test::assets(); }

nlohmann::json find_group(const nlohmann::json& report, const std::string& variant) {
  for (const auto& g : report.at("groups")) {
    if (g.at("variant") == variant) return g;
  }
  return {};
}

}  // namespace

TEST(Tokens, NearestRankAndHistogram) {
  const auto s = token_stats({0, 0, 10, 249, 250, 2999, 3000, 12000});
  EXPECT_EQ(s.count, 8);
  EXPECT_EQ(s.histogram[0], 4);
  EXPECT_EQ(s.histogram[1], 1);
  EXPECT_EQ(s.histogram[11], 1);
  EXPECT_EQ(s.histogram[12], 2);
  EXPECT_EQ(s.median, 249);
  EXPECT_EQ(s.p95, 12000);
  EXPECT_EQ(s.max, 12000);
  EXPECT_EQ(token_bin_label(0), "0-249");
  EXPECT_EQ(token_bin_label(11), "2750-2999");
  EXPECT_EQ(token_bin_label(12), "3000+");

  std::vector<std::int64_t> sorted;
  for (int i = 1; i <= 20; ++i) sorted.push_back(i);
  EXPECT_EQ(nearest_rank(sorted, 50.0), 10);
  EXPECT_EQ(nearest_rank(sorted, 95.0), 19);
  EXPECT_EQ(nearest_rank(sorted, 100.0), 20);
  EXPECT_EQ(error_code_of([] { nearest_rank({}, 50.0); }), ErrorCode::PreconditionViolated);
  EXPECT_EQ(token_stats({}).count, 0);
}

TEST(Tokens, EmptyReasoningLandsInTheFirstBin) {
  EXPECT_EQ(count_tokens(""), 0);
  EXPECT_EQ(count_tokens("  fan  is\nlow "), 3);
  EXPECT_EQ(token_stats({count_tokens("")}).histogram[0], 1);
}

TEST(Report, RatesRoundToOneDecimal) {
  EXPECT_DOUBLE_EQ(rate_percent(1, 3), 33.3);
  EXPECT_DOUBLE_EQ(rate_percent(2, 3), 66.7);
  EXPECT_DOUBLE_EQ(rate_percent(5, 5), 100.0);
  EXPECT_DOUBLE_EQ(rate_percent(0, 0), 0.0);
}

TEST(Report, JobsDoNotChangeResults) {
  RunConfig one;
  one.variants = {Variant::T3A, Variant::ASURADA};
  one.seeds = 1;
  RunConfig four = one;
  four.jobs = 4;
  const auto a = run_suite(A(), one);
  const auto b = run_suite(A(), four);
  ASSERT_EQ(a.traces.size(), 2 * A()->suite.templates.size());
  ASSERT_EQ(a.traces.size(), b.traces.size());
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    EXPECT_EQ(trace_to_jsonl(a.traces[i]), trace_to_jsonl(b.traces[i])) << i;
  }
  const auto report = build_report(a.traces);
  EXPECT_EQ(report.dump(), build_report(b.traces).dump());
  auto reversed = a.traces;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(build_report(reversed).dump(), report.dump());

  EXPECT_EQ(report.at("schema"), kReportSchema);
  const auto oracle = find_group(report, "ASURADA");
  ASSERT_FALSE(oracle.is_null());
  EXPECT_EQ(oracle.at("categories").at("ExplicitControl").at("rate"), 100.0);
  EXPECT_EQ(oracle.at("categories").at("EnvironmentAlerts").at("rate"), 100.0);
  const auto blind = find_group(report, "T3A");
  EXPECT_EQ(blind.at("geo_dependent").at("rate"), 0.0);
  EXPECT_EQ(blind.at("reasoning_tokens").at("histogram").size(), static_cast<std::size_t>(kTokenBins));
}

TEST(Report, TraceDirectoryRoundTrip) {
  autocab::test::TempDir dir;
  EXPECT_EQ(error_code_of([&] { report_tokens(dir.str()); }), ErrorCode::EmptyTraceSet);
  RunConfig config;
  config.seeds = 1;
  config.trace_dir = dir.str();
  const auto run = run_suite(A(), config);
  EXPECT_EQ(run.paths.size(), run.traces.size());
  const auto loaded = load_trace_dir(dir.str());
  EXPECT_EQ(build_report(loaded).dump(), build_report(run.traces).dump());
  const auto tokens = report_tokens(dir.str());
  ASSERT_EQ(tokens.count("ASURADA"), 1u);
  EXPECT_GT(tokens.at("ASURADA").count, 0);
}

TEST(Report, UnreachableEndpointBecomesAgentFailure) {
  RunConfig config;
  config.backend = Backend::External;
  config.endpoint = "127.0.0.1:1";
  config.seeds = 1;
  const auto run = run_suite(A(), config);
  ASSERT_FALSE(run.traces.empty());
  for (const auto& t : run.traces) EXPECT_EQ(t.outcome.terminated_by, Termination::AgentFailure);
}

TEST(Lint, ShippedSuiteIsClean) {
  const auto issues = lint_suite(*A(), 5);
  for (const auto& i : issues) ADD_FAILURE() << i;
}
