#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "autocab/agents.hpp"
#include "autocab/bench.hpp"
#include "autocab/error.hpp"
#include "autocab/server.hpp"

using namespace autocab;
namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitManifest = 2;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? v : fallback;
}

std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
  std::vector<Variant> out;
  for (const auto& n : names) {
    if (n == "all") return {Variant::T3A, Variant::M3A, Variant::ASURADA};
    auto v = parse_variant(n);
    if (!v) throw CLI::ValidationError("--variant", "unknown variant " + n);
    if (std::find(out.begin(), out.end(), *v) == out.end()) out.push_back(*v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"autocab: in-vehicle agent benchmark"};
  app.require_subcommand(1);

  std::string data_dir = default_data_dir();
  std::string suite;
  app.add_option("--data", data_dir, "data directory (layouts, regions, prompts)");
  app.add_option("--suite", suite, "suite manifest");

  auto* run = app.add_subcommand("run", "run the suite and write traces and a report");
  std::vector<std::string> variants{"asurada"};
  std::string backend = "scripted";
  std::uint64_t seeds = 5;
  std::string region;
  int jobs = 1;
  std::string out_dir = "out";
  std::string endpoint;
  std::string profile = "default";
  std::optional<int> max_steps;
  run->add_option("--variant", variants, "t3a, m3a, asurada or all")->delimiter(',');
  run->add_option("--backend", backend, "scripted or external");
  run->add_option("--seeds", seeds, "seeds per template");
  run->add_option("--region", region, "region id for every template that allows it");
  run->add_option("--jobs", jobs, "parallel episodes")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--endpoint", endpoint, "host:port of an external completion server");
  run->add_option("--profile", profile, "prompt profile id");
  run->add_option("--max-steps", max_steps, "override every template's step budget");

  auto* replay_cmd = app.add_subcommand("replay", "re-execute traces and check digests");
  std::string replay_path;
  replay_cmd->add_option("path", replay_path, "trace file or directory")->required();

  auto* report = app.add_subcommand("report", "aggregate a trace directory");
  std::string traces_dir;
  std::string report_out;
  report->add_option("--traces", traces_dir, "trace directory (default AUTOCAB_TRACE_DIR)");
  report->add_option("--out", report_out, "write report.json and report.txt here");

  auto* lint = app.add_subcommand("validate-suite", "lint the task templates");
  std::uint64_t lint_seeds = 5;
  lint->add_option("--seeds", lint_seeds, "seeds to instantiate per template");

  auto* serve = app.add_subcommand("serve", "serve the wire protocol");
  std::string host = "127.0.0.1";
  int port = 7878;
  bool stdio = false;
  double idle = 300.0;
  std::string trace_dir;
  bool no_png = false;
  serve->add_option("--host", host);
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_flag("--stdio", stdio, "one session over stdin/stdout");
  serve->add_option("--idle-timeout", idle, "seconds");
  serve->add_option("--trace-dir", trace_dir, "default AUTOCAB_TRACE_DIR, else ./traces");
  serve->add_flag("--no-png", no_png, "omit screen PNGs from obs frames");

  CLI11_PARSE(app, argc, argv);

  std::shared_ptr<const Assets> assets;
  try {
    assets = Assets::load(data_dir, suite);
  } catch (const std::exception& e) {
    std::cerr << "manifest error: " << e.what() << "\n";
    return kExitManifest;
  }

  try {
    if (run->parsed()) {
      RunConfig config;
      config.variants = parse_variants(variants);
      auto b = parse_backend(backend);
      if (!b) throw CLI::ValidationError("--backend", "unknown backend " + backend);
      config.backend = *b;
      config.seeds = seeds;
      config.region = region;
      if (!region.empty()) assets->kb.require(region);
      config.jobs = jobs;
      config.endpoint = endpoint;
      config.prompt_profile = profile;
      config.max_steps = max_steps;
      config.created_at = utc_now_iso();
      config.trace_dir = env_or("AUTOCAB_TRACE_DIR", (fs::path(out_dir) / "traces").string());
      fs::create_directories(out_dir);
      auto result = run_suite(assets, config);
      const auto rep = build_report(result.traces);
      write_file(fs::path(out_dir) / "report.json", rep.dump(2) + "\n");
      const auto text = report_text(rep);
      write_file(fs::path(out_dir) / "report.txt", text);
      nlohmann::json meta{{"wall_seconds", result.wall_seconds},
                          {"created_at", config.created_at},
                          {"jobs", jobs},
                          {"trace_dir", config.trace_dir}};
      write_file(fs::path(out_dir) / "run.json", meta.dump(2) + "\n");
      std::cout << text;
      std::cout << "traces: " << config.trace_dir << "\nwall: " << result.wall_seconds << " s\n";
      return 0;
    }
    if (replay_cmd->parsed()) {
      std::vector<std::string> paths;
      if (fs::is_directory(replay_path)) {
        for (const auto& e : fs::directory_iterator(replay_path)) {
          if (e.path().extension() == ".jsonl") paths.push_back(e.path().string());
        }
        std::sort(paths.begin(), paths.end());
      } else {
        paths.push_back(replay_path);
      }
      int failed = 0;
      for (const auto& p : paths) {
        try {
          const auto outcome = replay(read_trace(p), assets);
          std::cout << "OK   " << p << " reward=" << outcome.reward << "\n";
        } catch (const std::exception& e) {
          ++failed;
          std::cout << "FAIL " << p << " " << e.what() << "\n";
        }
      }
      std::cout << (paths.size() - failed) << "/" << paths.size() << " traces replayed\n";
      return failed == 0 && !paths.empty() ? 0 : kExitFailure;
    }
    if (report->parsed()) {
      const auto dir = traces_dir.empty() ? env_or("AUTOCAB_TRACE_DIR", "out/traces") : traces_dir;
      auto traces = load_trace_dir(dir);
      if (traces.empty()) throw Error(ErrorCode::EmptyTraceSet, "no traces in " + dir);
      const auto rep = build_report(std::move(traces));
      const auto text = report_text(rep);
      if (!report_out.empty()) {
        fs::create_directories(report_out);
        write_file(fs::path(report_out) / "report.json", rep.dump(2) + "\n");
        write_file(fs::path(report_out) / "report.txt", text);
      }
      std::cout << text;
      return 0;
    }
    if (lint->parsed()) {
      const auto issues = lint_suite(*assets, lint_seeds);
      for (const auto& i : issues) std::cout << i << "\n";
      std::cout << assets->suite.templates.size() << " templates, " << issues.size() << " issues\n";
      return issues.empty() ? 0 : kExitFailure;
    }
    if (serve->parsed()) {
      ServerOptions options;
      options.trace_dir = resolve_trace_dir(trace_dir);
      options.idle_timeout_s = idle;
      options.include_png = !no_png;
      if (stdio) {
        serve_stdio(assets, options);
        return 0;
      }
      Server server(assets, options);
      server.bind(host, port);
      std::cerr << "listening on " << host << ":" << server.port() << "\n";
      server.run();
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
