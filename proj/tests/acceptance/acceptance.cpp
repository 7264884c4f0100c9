// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "autocab/bench.hpp"
#include "support.hpp"

using namespace autocab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::shared_ptr<const Assets> A() { return autocab::test::assets(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Trace file text with the wall-clock header field blanked.
std::string without_wall_clock(const std::string& text) {
  const auto nl = text.find('\n');
  auto header = nlohmann::json::parse(text.substr(0, nl));
  header.erase("created_at");
  return header.dump() + text.substr(nl);
}

struct Runs {
  SuiteRun first;
  nlohmann::json report;
  autocab::test::TempDir dir_a, dir_b;
};

RunConfig full_config(const std::string& dir, int jobs) {
  RunConfig c;
  c.variants = {Variant::T3A, Variant::M3A, Variant::ASURADA};
  c.seeds = 5;
  c.jobs = jobs;
  c.trace_dir = dir;
  c.created_at = utc_now_iso();
  return c;
}

Verdict determinism(Runs& runs) {
  const auto t0 = std::chrono::steady_clock::now();
  runs.first = run_suite(A(), full_config(runs.dir_a.str(), 1));
  auto second = run_suite(A(), full_config(runs.dir_b.str(), 2));
  runs.report = build_report(runs.first.traces);
  const double elapsed = seconds_since(t0);

  const auto expected = 3 * A()->suite.templates.size() * 5;
  if (runs.first.traces.size() != expected) return {false, "expected " + std::to_string(expected) + " episodes"};
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(runs.dir_a.path())) {
    const auto other = runs.dir_b.path() / e.path().filename();
    if (!fs::exists(other)) return {false, "missing in second run: " + e.path().filename().string()};
    if (without_wall_clock(slurp(e.path())) != without_wall_clock(slurp(other))) {
      return {false, "trace differs: " + e.path().filename().string()};
    }
    ++compared;
  }
  if (compared != expected) return {false, std::to_string(compared) + " trace files"};
  if (build_report(second.traces).dump() != runs.report.dump()) return {false, "reports differ"};
  std::ostringstream d;
  d << compared << " traces and report identical, " << std::fixed << std::setprecision(1) << elapsed << " s";
  return {elapsed < 120.0, d.str()};
}

const nlohmann::json* group(const nlohmann::json& report, const std::string& variant) {
  for (const auto& g : report.at("groups")) {
    if (g.at("variant") == variant) return &g;
  }
  return nullptr;
}

Verdict oracle_completeness(const Runs& runs) {
  const auto* g = group(runs.report, "ASURADA");
  if (g == nullptr) return {false, "no ASURADA group"};
  const auto& ec = g->at("categories").at("ExplicitControl");
  const auto& ea = g->at("categories").at("EnvironmentAlerts");
  const bool ok = ec.at("rate") == 100.0 && ea.at("rate") == 100.0;
  return {ok, "ExplicitControl " + ec.at("rate").dump() + "%, EnvironmentAlerts " + ea.at("rate").dump() + "%"};
}

Verdict geo_ablation(const Runs& runs) {
  const EpisodeTrace* oracle = nullptr;
  const EpisodeTrace* blind = nullptr;
  for (const auto& t : runs.first.traces) {
    if (t.header.template_id != "da_paris_overspeed" || t.header.seed != 0) continue;
    if (t.header.variant == "ASURADA") oracle = &t;
    if (t.header.variant == "M3A") blind = &t;
  }
  if (oracle == nullptr || blind == nullptr) return {false, "Paris episodes missing"};
  if (oracle->header.region_id != "paris_urban") return {false, "Paris template ran in " + oracle->header.region_id};
  bool api = false;
  for (const auto& s : oracle->steps) {
    if (const auto* c = std::get_if<ApiCallAction>(&s.action)) api |= c->name == "open_safety_center";
  }
  if (oracle->outcome.reward != 1 || !api) return {false, "ASURADA did not open the safety center"};
  const bool infeasible =
      !blind->steps.empty() && blind->steps.back().action == Action{StatusAction{TaskStatus::Infeasible}};
  if (blind->outcome.reward != 0 || !infeasible) return {false, "M3A did not declare Infeasible"};

  std::map<std::string, std::pair<int, int>> per_variant;  // successes, episodes
  for (const auto& t : runs.first.traces) {
    if (!t.header.geo_dependent || t.header.category != "DrivingAlignment") continue;
    auto& [ok, n] = per_variant[t.header.variant];
    ok += t.outcome.reward;
    ++n;
  }
  const auto& a = per_variant["ASURADA"];
  const auto& m = per_variant["M3A"];
  const bool split = a.second > 0 && a.first == a.second && m.second == a.second && m.first == 0;
  return {split, "Paris flip ok; geo_dependent DA ASURADA " + std::to_string(a.first) + "/" +
                     std::to_string(a.second) + ", M3A " + std::to_string(m.first) + "/" + std::to_string(m.second)};
}

// Hand-written truth for each catalog check, straight off the state struct.
using Truth = std::function<bool(const VehicleState&, const Value&)>;

Verdict validator_equivalence() {
  const std::map<std::string, Truth> truth{
      {"check_fan_speed_max", [](const VehicleState& s, const Value&) { return s.hvac.fan_speed == 6; }},
      {"check_driver_seat_heater_enable",
       [](const VehicleState& s, const Value&) { return s.hvac.seat_heater_driver >= 1; }},
      {"check_ac_auto", [](const VehicleState& s, const Value&) { return s.hvac.ac_mode == AcMode::Auto; }},
      {"check_media_play", [](const VehicleState& s, const Value&) { return s.media.playing; }},
      {"check_front_defroster_enable", [](const VehicleState& s, const Value&) { return s.hvac.defrost_front; }},
      {"check_rear_defroster_enable", [](const VehicleState& s, const Value&) { return s.hvac.defrost_rear; }},
      {"check_raw_defroster_enable", [](const VehicleState& s, const Value&) { return s.hvac.defrost_rear; }},
      {"check_screen_brightness", [](const VehicleState& s, const Value&) { return s.system.screen_brightness >= 70; }},
      {"check_safety_center_open",
       [](const VehicleState& s, const Value&) { return s.safety.notification_center_open; }},
      {"check_nav_destination_set", [](const VehicleState& s, const Value&) { return s.nav.destination.has_value(); }},
      {"check_temperature_setpoint",
       [](const VehicleState& s, const Value& p) { return std::fabs(s.hvac.setpoint_c - std::get<double>(p)) < 1e-9; }},
      {"check_volume_at_most",
       [](const VehicleState& s, const Value& p) { return s.media.volume <= std::get<std::int64_t>(p); }},
      {"check_fog_lights_on", [](const VehicleState& s, const Value&) { return s.motion.fog_lights; }},
      {"check_high_beams_off", [](const VehicleState& s, const Value&) { return !s.motion.high_beams; }},
  };
  // Parameter slots and the signal each one can be forced to match.
  const std::map<std::string, std::pair<nlohmann::json, std::string>> params{
      {"t", {{{"min", 16.0}, {"max", 30.0}, {"step", 0.5}}, "hvac.setpoint_c"}},
      {"v", {{{"min", 0}, {"max", 100}, {"step", 1}}, "media.volume"}},
  };

  std::mt19937_64 rng(2024);
  std::size_t checked = 0;
  for (const auto& entry : validator_catalog()) {
    auto it = truth.find(entry.id);
    if (it == truth.end()) return {false, "no reference predicate for " + entry.id};
    nlohmann::json tmpl{{"template_id", "eq_" + entry.id},
                        {"category", "ExplicitControl"},
                        {"functional_area", "HVAC"},
                        {"instruction", "x"},
                        {"validator", {{"check", entry.id}}}};
    std::string forced;
    for (const auto& p : entry.params) {
      tmpl["slots"].push_back({{"name", p}, {"range", params.at(p).first}});
      tmpl["validator"]["args"][p] = "{" + p + "}";
      forced = params.at(p).second;
    }
    const auto t = templates_from_json(nlohmann::json::array({tmpl}), ".").at(0);
    int agree = 0, positives = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto inst = instantiate(t, rng() % 1000, A()->kb.default_region());
      auto state = autocab::test::random_state(rng);
      const Value param = inst.bound_slots.empty() ? Value{} : inst.bound_slots[0].second;
      if (!forced.empty() && rng() % 4 == 0) state = override_signal(state, forced, param);
      const bool want = it->second(state, param);
      const bool got = validate(inst, state);
      positives += want;
      if (want != got) {
        return {false, entry.id + " disagrees on state " + serialize_state(state).substr(0, 120)};
      }
      ++agree;
    }
    if (positives == 0 || positives == 1000) return {false, entry.id + " never varied over the sample"};
    checked += static_cast<std::size_t>(agree);
  }
  return {true, std::to_string(validator_catalog().size()) + " checks x 1000 states (" + std::to_string(checked) +
                    " evaluations)"};
}

// Expected tap effect derived from the node's binding alone.
GuiEffect expected_effect(const UiNode& n, int x) {
  const auto& b = n.binding;
  switch (n.role) {
    case Role::Toggle: return ControlCommand{b.signal, ControlOp::Toggle, std::nullopt};
    case Role::Button:
      if (b.navigate) return NavigateTo{*b.navigate};
      if (b.op) return ControlCommand{b.signal, *b.op, b.value};
      return NoOp{};
    case Role::Slider: {
      const auto* info = find_signal(b.signal);
      const double frac = static_cast<double>(x - n.bounds.x) / (n.bounds.w - 1);
      const double steps = std::round(frac * (info->max - info->min) / info->step);
      const double v = info->min + steps * info->step;
      if (info->type == SignalType::Int) return ControlCommand{b.signal, ControlOp::Set, Value{std::llround(v) + std::int64_t{0}}};
      return ControlCommand{b.signal, ControlOp::Set, Value{quantize_tenth(v)}};
    }
    default: return NoOp{};
  }
}

Verdict som_grounding() {
  std::mt19937_64 rng(77);
  std::size_t taps = 0;
  for (int i = 0; i < 200; ++i) {
    const auto state = autocab::test::random_state(rng);
    for (auto id : kAllScreens) {
      const auto tree = build_ui_tree(A()->layouts, state, id);
      const auto som = annotate_som(tree, render(tree));
      const auto nodes = interactable_nodes(tree);
      const std::string where = std::string(to_string(id)) + " state " + std::to_string(i);
      if (som.index_map.size() != nodes.size()) return {false, where + ": index map size"};
      std::set<int> seen;
      for (const auto* n : nodes) {
        auto it = som.index_map.find(n->som_index);
        if (it == som.index_map.end() || !(it->second == n->bounds) || !seen.insert(n->som_index).second) {
          return {false, where + ": index " + std::to_string(n->som_index) + " not bijective"};
        }
        const int cx = n->bounds.center_x();
        const int cy = n->bounds.center_y();
        if (!(dispatch_tap(tree, cx, cy) == expected_effect(*n, cx))) {
          return {false, where + ": tap at index " + std::to_string(n->som_index) + " misdirected"};
        }
        ++taps;
      }
      if (!seen.empty() && (*seen.begin() != 1 || *seen.rbegin() != static_cast<int>(seen.size()))) {
        return {false, where + ": indices not 1..n"};
      }
    }
  }
  return {true, "200 states x 8 screens, " + std::to_string(taps) + " taps grounded"};
}

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  const double r = M_PI / 180.0;
  const double a = std::pow(std::sin((lat2 - lat1) * r / 2), 2) +
                   std::cos(lat1 * r) * std::cos(lat2 * r) * std::pow(std::sin((lon2 - lon1) * r / 2), 2);
  return 2 * kEarthRadiusM * std::asin(std::sqrt(a));
}

Verdict geometry() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lat(-70.0, 70.0), lon(-180.0, 180.0), heading(0.0, 360.0),
      speed(0.5, 130.0), dt(0.1, 60.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    GeoFix f;
    f.lat = lat(rng);
    f.lon = lon(rng);
    f.heading_deg = heading(rng);
    const double v = speed(rng);
    const double t = dt(rng);
    const auto next = advance_fix(f, v, t, {});
    const double want = v / 3.6 * t;
    worst = std::max(worst, std::fabs(haversine_m(f.lat, f.lon, next.lat, next.lon) - want) / want);
  }
  std::ostringstream d;
  d << "1000 samples, worst relative error " << std::scientific << std::setprecision(2) << worst;
  return {worst < 0.01, d.str()};
}

std::uintmax_t dir_bytes(const fs::path& root) {
  std::uintmax_t total = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) total += e.file_size();
  }
  return total;
}

Verdict footprint() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  const double peak_mb = static_cast<double>(usage.ru_maxrss) / 1024.0;
  const double assets_kb = static_cast<double>(dir_bytes(A()->data_dir)) / 1024.0;
  const double assets_mb = assets_kb / 1024.0;
  std::ostringstream d;
  d << std::fixed << std::setprecision(1) << "peak RSS " << peak_mb << " MB, assets " << assets_kb << " KB";
  return {peak_mb < 512.0 && assets_mb < 100.0, d.str()};
}

Action mutate(const Action& a) {
  if (std::holds_alternative<WaitAction>(a)) return TapAction{std::nullopt, 1, 1};
  return WaitAction{};
}

Verdict replay_integrity(const Runs& runs) {
  std::size_t replayed = 0, mutations = 0;
  for (const auto& e : fs::directory_iterator(runs.dir_a.path())) {
    const auto trace = read_trace(e.path().string());
    try {
      replay(trace, A());
    } catch (const std::exception& ex) {
      return {false, e.path().filename().string() + ": " + ex.what()};
    }
    ++replayed;
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      auto bad = trace;
      bad.steps[i].action = mutate(bad.steps[i].action);
      auto code = autocab::test::error_code_of([&] { replay(bad, A()); });
      if (code != ErrorCode::DigestMismatch) {
        return {false, e.path().filename().string() + " step " + std::to_string(i) + " mutation undetected"};
      }
      ++mutations;
    }
  }
  if (replayed != runs.first.traces.size()) return {false, "only " + std::to_string(replayed) + " traces on disk"};
  return {true, std::to_string(replayed) + " traces replayed, " + std::to_string(mutations) + " mutations detected"};
}

}  // namespace

int main() {
  Runs runs;
  std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"determinism", [&] { return determinism(runs); }},
      {"oracle-completeness", [&] { return oracle_completeness(runs); }},
      {"geo-ablation-flip", [&] { return geo_ablation(runs); }},
      {"validator-equivalence", validator_equivalence},
      {"som-grounding", som_grounding},
      {"geometry", geometry},
      {"replay-integrity", [&] { return replay_integrity(runs); }},
      {"footprint", footprint},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
