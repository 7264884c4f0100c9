#include "autocab/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "autocab/error.hpp"

namespace autocab {

namespace {

// Stands in for an agent that could not be constructed, so the episode
// still leaves a trace.
class BrokenAgent : public AgentHandle {
 public:
  BrokenAgent(Variant v, Backend b, std::string why) : variant_(v), backend_(b), why_(std::move(why)) {}
  std::string variant() const override { return std::string(to_string(variant_)); }
  std::string backend() const override { return std::string(to_string(backend_)); }
  ModalityConfig modalities() const override { return modalities_for(variant_); }
  void begin(const TaskInstance&) override {}
  AgentDecision act(const Observation&) override { throw Error(ErrorCode::AgentFailure, why_); }
  std::string reflect(const Observation&, const Action&, const Observation&) override { return {}; }

 private:
  Variant variant_;
  Backend backend_;
  std::string why_;
};

struct Job {
  Variant variant;
  const TaskTemplate* tmpl;
  std::uint64_t seed;
};

struct Tally {
  std::int64_t instances = 0;
  std::int64_t successes = 0;
  void add(int reward) {
    ++instances;
    successes += reward == 1 ? 1 : 0;
  }
  nlohmann::json to_json() const {
    return {{"instances", instances},
            {"successes", successes},
            {"rate", instances ? nlohmann::json(rate_percent(successes, instances)) : nlohmann::json()}};
  }
};

std::string fixed1(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}

}  // namespace

SuiteRun run_suite(std::shared_ptr<const Assets> assets, const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Job> jobs;
  for (auto v : config.variants) {
    for (const auto& t : assets->suite.templates) {
      for (std::uint64_t s = 0; s < config.seeds; ++s) jobs.push_back({v, &t, s});
    }
  }
  SuiteRun run;
  run.traces.resize(jobs.size());
  run.paths.resize(jobs.size());
  if (!config.trace_dir.empty()) std::filesystem::create_directories(config.trace_dir);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      const auto& region = choose_region(*job.tmpl, assets->kb, config.region);
      const auto inst = instantiate(*job.tmpl, job.seed, region);
      AgentConfig ac;
      ac.variant = job.variant;
      ac.backend = config.backend;
      ac.endpoint = config.endpoint;
      ac.prompt_profile = config.prompt_profile;
      std::unique_ptr<AgentHandle> agent;
      try {
        agent = make_agent(ac, assets);
      } catch (const std::exception& e) {
        agent = std::make_unique<BrokenAgent>(job.variant, config.backend, e.what());
      }
      EpisodeOptions opts;
      opts.max_steps = config.max_steps;
      opts.created_at = config.created_at;
      run.traces[i] = run_episode(*agent, inst, assets, opts);
      if (!config.trace_dir.empty()) run.paths[i] = write_trace(run.traces[i], config.trace_dir);
    }
  };
  const int n = std::max(1, std::min<int>(config.jobs, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::PreconditionViolated, "percentile of an empty sample");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

TokenStats token_stats(std::vector<std::int64_t> samples) {
  TokenStats s;
  std::sort(samples.begin(), samples.end());
  s.count = static_cast<std::int64_t>(samples.size());
  for (auto v : samples) {
    const auto bin = std::min<std::int64_t>(std::max<std::int64_t>(v, 0) / kTokenBinWidth, kTokenBins - 1);
    ++s.histogram[static_cast<std::size_t>(bin)];
  }
  if (!samples.empty()) {
    s.median = nearest_rank(samples, 50.0);
    s.p95 = nearest_rank(samples, 95.0);
    s.max = samples.back();
  }
  return s;
}

std::string token_bin_label(int bin) {
  if (bin >= kTokenBins - 1) return std::to_string((kTokenBins - 1) * kTokenBinWidth) + "+";
  return std::to_string(bin * kTokenBinWidth) + "-" + std::to_string((bin + 1) * kTokenBinWidth - 1);
}

double rate_percent(std::int64_t successes, std::int64_t instances) {
  if (instances <= 0) return 0.0;
  return std::round(1000.0 * static_cast<double>(successes) / static_cast<double>(instances)) / 10.0;
}

nlohmann::json build_report(std::vector<EpisodeTrace> traces) {
  std::sort(traces.begin(), traces.end(), [](const EpisodeTrace& a, const EpisodeTrace& b) {
    const auto& x = a.header;
    const auto& y = b.header;
    return std::tie(x.variant, x.backend, x.template_id, x.seed, x.region_id) <
           std::tie(y.variant, y.backend, y.template_id, y.seed, y.region_id);
  });

  std::set<std::string> suite_versions;
  std::set<std::string> kb_versions;
  std::set<std::string> engine_versions;
  std::set<std::uint64_t> seeds;
  std::set<std::string> templates;

  struct Group {
    Tally total;
    std::map<std::string, Tally> categories;
    std::map<std::string, Tally> areas;
    Tally geo_dependent;
    std::map<std::string, std::int64_t> terminated_by;
    std::int64_t steps = 0;
    std::vector<std::int64_t> tokens;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;

  for (const auto& t : traces) {
    const auto& h = t.header;
    suite_versions.insert(h.suite_version);
    kb_versions.insert(h.kb_version);
    engine_versions.insert(h.engine_version);
    seeds.insert(h.seed);
    templates.insert(h.template_id);
    auto& g = groups[{h.variant, h.backend}];
    if (g.categories.empty()) {
      for (auto c : kAllCategories) g.categories[std::string(to_string(c))];
      for (auto a : kAllAreas) g.areas[std::string(to_string(a))];
    }
    g.total.add(t.outcome.reward);
    g.categories[h.category].add(t.outcome.reward);
    g.areas[h.functional_area].add(t.outcome.reward);
    if (h.geo_dependent) g.geo_dependent.add(t.outcome.reward);
    ++g.terminated_by[std::string(to_string(t.outcome.terminated_by))];
    g.steps += t.outcome.steps_used;
    for (const auto& s : t.steps) g.tokens.push_back(s.reasoning_tokens);
  }

  nlohmann::json out_groups = nlohmann::json::array();
  for (auto& [key, g] : groups) {
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [name, tally] : g.categories) cats[name] = tally.to_json();
    nlohmann::json areas = nlohmann::json::object();
    for (const auto& [name, tally] : g.areas) areas[name] = tally.to_json();
    const auto stats = token_stats(g.tokens);
    nlohmann::json bins = nlohmann::json::array();
    for (int b = 0; b < kTokenBins; ++b) {
      bins.push_back({{"bin", token_bin_label(b)}, {"count", stats.histogram[static_cast<std::size_t>(b)]}});
    }
    out_groups.push_back({{"variant", key.first},
                          {"backend", key.second},
                          {"overall", g.total.to_json()},
                          {"categories", cats},
                          {"areas", areas},
                          {"geo_dependent", g.geo_dependent.to_json()},
                          {"terminated_by", g.terminated_by},
                          {"steps_used", g.steps},
                          {"reasoning_tokens",
                           {{"bin_width", kTokenBinWidth},
                            {"histogram", bins},
                            {"steps", stats.count},
                            {"median", stats.median},
                            {"p95", stats.p95},
                            {"max", stats.max}}}});
  }
  return {{"schema", kReportSchema},
          {"metadata",
           {{"engine_versions", engine_versions},
            {"suite_versions", suite_versions},
            {"kb_versions", kb_versions},
            {"seeds", seeds},
            {"templates", templates.size()},
            {"episodes", traces.size()}}},
          {"groups", out_groups}};
}

std::string report_text(const nlohmann::json& report) {
  std::ostringstream os;
  const auto& meta = report.at("metadata");
  os << "autocab report (" << report.at("schema").get<std::string>() << ")\n";
  os << "episodes " << meta.at("episodes") << ", templates " << meta.at("templates") << ", seeds "
     << meta.at("seeds").size() << "\n\n";
  auto cell = [](const nlohmann::json& t) {
    if (t.at("rate").is_null()) return std::string("-");
    return fixed1(t.at("rate").get<double>()) + " (" + std::to_string(t.at("successes").get<std::int64_t>()) + "/" +
           std::to_string(t.at("instances").get<std::int64_t>()) + ")";
  };
  for (const auto& g : report.at("groups")) {
    os << "== " << g.at("variant").get<std::string>() << " / " << g.at("backend").get<std::string>() << "\n";
    os << std::left << std::setw(22) << "overall" << cell(g.at("overall")) << "\n";
    for (auto c : kAllCategories) {
      os << std::left << std::setw(22) << to_string(c) << cell(g.at("categories").at(std::string(to_string(c))))
         << "\n";
    }
    os << std::left << std::setw(22) << "geo_dependent" << cell(g.at("geo_dependent")) << "\n";
    os << "areas:";
    for (auto a : kAllAreas) {
      const auto& t = g.at("areas").at(std::string(to_string(a)));
      os << " " << to_string(a) << "=" << (t.at("rate").is_null() ? std::string("-") : fixed1(t.at("rate").get<double>()));
    }
    os << "\n";
    const auto& tok = g.at("reasoning_tokens");
    os << "reasoning tokens per step: median " << tok.at("median") << ", p95 " << tok.at("p95") << ", max "
       << tok.at("max") << "\n";
    for (const auto& b : tok.at("histogram")) {
      if (b.at("count").get<std::int64_t>() == 0) continue;
      os << "  " << std::left << std::setw(10) << b.at("bin").get<std::string>() << b.at("count") << "\n";
    }
    os << "\n";
  }
  return os.str();
}

std::vector<std::string> lint_suite(const Assets& assets, std::uint64_t seeds) {
  std::vector<std::string> issues;
  std::map<Category, int> per_category;
  std::map<FunctionalArea, int> per_area;
  for (const auto& t : assets.suite.templates) {
    ++per_category[t.category];
    ++per_area[t.functional_area];
    std::vector<const RegionProfile*> regions;
    for (const auto& r : assets.kb.regions()) {
      if (std::all_of(t.geo_requirements.begin(), t.geo_requirements.end(),
                      [&r](const std::string& tag) { return r.has_tag(tag); })) {
        regions.push_back(&r);
      }
    }
    for (const auto* region : regions) {
      std::uint64_t combos = 1;
      for (const auto& slot : t.slots) combos *= std::max<std::size_t>(1, slot.domain(*region).size());
      std::set<std::string> seen;
      for (std::uint64_t s = 0; s < seeds; ++s) {
        try {
          const auto inst = instantiate(t, s, *region);
          if (validate(inst, initial_state(inst))) {
            issues.push_back(t.template_id + " seed " + std::to_string(s) + " in " + region->region_id +
                             ": already satisfied at start");
          }
          if (s < combos && !seen.insert(to_json(inst).at("bound_slots").dump()).second) {
            issues.push_back(t.template_id + " seed " + std::to_string(s) + " in " + region->region_id +
                             ": repeats the slot binding of an earlier seed");
          }
        } catch (const Error& e) {
          issues.push_back(t.template_id + " seed " + std::to_string(s) + " in " + region->region_id + ": " + e.what());
        }
      }
    }
  }
  for (auto c : kAllCategories) {
    if (per_category[c] < 5) {
      issues.push_back(std::string(to_string(c)) + ": " + std::to_string(per_category[c]) + " templates, need 5");
    }
  }
  for (auto a : kAllAreas) {
    if (per_area[a] < 2) {
      issues.push_back(std::string(to_string(a)) + ": " + std::to_string(per_area[a]) + " templates, need 2");
    }
  }
  return issues;
}

std::vector<EpisodeTrace> load_trace_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".jsonl") paths.push_back(e.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  std::vector<EpisodeTrace> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(read_trace(p));
  return out;
}

std::map<std::string, TokenStats> report_tokens(const std::string& dir) {
  const auto traces = load_trace_dir(dir);
  if (traces.empty()) throw Error(ErrorCode::EmptyTraceSet, "no traces in " + dir);
  std::map<std::string, std::vector<std::int64_t>> samples;
  for (const auto& t : traces) {
    auto& v = samples[t.header.variant];
    for (const auto& s : t.steps) v.push_back(s.reasoning_tokens);
  }
  std::map<std::string, TokenStats> out;
  for (auto& [variant, v] : samples) out.emplace(variant, token_stats(std::move(v)));
  return out;
}

}  // namespace autocab
