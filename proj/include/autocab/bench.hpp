#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "autocab/agents.hpp"
#include "autocab/engine.hpp"

namespace autocab {

inline constexpr std::string_view kReportSchema = "autocab-report/1";
inline constexpr int kTokenBinWidth = 250;
inline constexpr int kTokenBins = 13;  // [0,250) ... [2750,3000), 3000+

struct RunConfig {
  std::vector<Variant> variants{Variant::ASURADA};
  Backend backend = Backend::Scripted;
  std::uint64_t seeds = 5;
  std::string region;  // empty: each template's default
  int jobs = 1;
  std::string trace_dir;  // where traces are written
  std::string endpoint;
  std::string prompt_profile = "default";
  std::optional<int> max_steps;
  std::string created_at;  // stamped into trace headers
};

struct SuiteRun {
  std::vector<EpisodeTrace> traces;  // canonical order: variant, template, seed
  std::vector<std::string> paths;
  double wall_seconds = 0.0;
};

// Runs every template x seed x variant. Episode failures end up in the
// traces (AgentFailure), never in exceptions.
SuiteRun run_suite(std::shared_ptr<const Assets> assets, const RunConfig& config);

struct TokenStats {
  std::array<std::int64_t, kTokenBins> histogram{};
  std::int64_t count = 0;
  std::int64_t median = 0;  // nearest rank
  std::int64_t p95 = 0;
  std::int64_t max = 0;
};

TokenStats token_stats(std::vector<std::int64_t> samples);
std::string token_bin_label(int bin);

// Nearest-rank percentile of a sorted, non-empty sample; q in (0, 100].
std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, double q);

// One decimal, as reported.
double rate_percent(std::int64_t successes, std::int64_t instances);

// Deterministic in the set of traces; order does not matter.
nlohmann::json build_report(std::vector<EpisodeTrace> traces);
std::string report_text(const nlohmann::json& report);

// Template lint beyond what loading checks: instances must start
// unsatisfied, instantiation must be injective in the seed, and every
// category and area must be covered. Returns one line per problem.
std::vector<std::string> lint_suite(const Assets& assets, std::uint64_t seeds);

std::vector<EpisodeTrace> load_trace_dir(const std::string& dir);

// Per-variant reasoning-token statistics over a trace directory. Throws EmptyTraceSet.
std::map<std::string, TokenStats> report_tokens(const std::string& dir);

}  // namespace autocab
