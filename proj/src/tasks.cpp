#include "autocab/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "autocab/error.hpp"

namespace autocab {

namespace {

namespace fs = std::filesystem;

constexpr std::array<std::string_view, 4> kCategoryNames{"ExplicitControl", "ImplicitIntent", "DrivingAlignment",
                                                         "EnvironmentAlerts"};
constexpr std::array<std::string_view, 8> kAreaNames{"Maps", "HVAC", "Road", "Phenomenon",
                                                     "Media", "Apps", "System", "Comms"};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ValueRef parse_value_ref(const nlohmann::json& j) {
  ValueRef ref;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s.size() > 2 && s.front() == '{' && s.back() == '}') {
      ref.kind = ValueRef::Kind::Slot;
      ref.name = s.substr(1, s.size() - 2);
      return ref;
    }
    if (s.rfind("$region.", 0) == 0) {
      ref.kind = ValueRef::Kind::Region;
      ref.name = s.substr(8);
      return ref;
    }
  }
  ref.literal = value_from_json(j);
  return ref;
}

NumericRange parse_range(const nlohmann::json& j) {
  NumericRange r;
  r.min = j.at("min").get<double>();
  r.max = j.at("max").get<double>();
  r.step = j.value("step", 1.0);
  r.integral = j.at("min").is_number_integer() && j.at("max").is_number_integer() &&
               (!j.contains("step") || j.at("step").is_number_integer());
  if (!(r.step > 0) || r.max < r.min) throw Error(ErrorCode::ParseError, "bad range " + j.dump());
  return r;
}

Value region_value(const RegionProfile& region, const std::string& field) {
  if (field == "urban_limit_kmh") return region.urban_limit_kmh;
  if (field == "highway_limit_kmh") return region.highway_limit_kmh;
  if (field == "rural_limit_kmh") return region.rural_limit_kmh;
  if (field == "humidity_pct") return region.climate.humidity_pct;
  if (field == "mean_temp_c") {
    auto it = region.climate.mean_temp_c.find(season_at(0.0));
    return it == region.climate.mean_temp_c.end() ? 15.0 : it->second;
  }
  throw Error(ErrorCode::InvalidBinding, "unknown region field " + field);
}

bool is_region_field(const std::string& field) {
  static const std::set<std::string> kFields{"urban_limit_kmh", "highway_limit_kmh", "rural_limit_kmh",
                                             "humidity_pct", "mean_temp_c"};
  return kFields.contains(field);
}

Value resolve(const ValueRef& ref, const std::vector<std::pair<std::string, Value>>& slots,
              const RegionProfile& region) {
  switch (ref.kind) {
    case ValueRef::Kind::Literal: return ref.literal;
    case ValueRef::Kind::Region: return region_value(region, ref.name);
    case ValueRef::Kind::Slot:
      for (const auto& [name, value] : slots) {
        if (name == ref.name) return value;
      }
      throw Error(ErrorCode::InvalidBinding, "unbound slot " + ref.name);
  }
  return {};
}

std::vector<std::string> placeholders(const std::string& text) {
  std::vector<std::string> out;
  static const std::regex kPlaceholder(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kPlaceholder); it != std::sregex_iterator(); ++it) {
    out.push_back((*it)[1].str());
  }
  return out;
}

void check_ref(const ValueRef& ref, const std::set<std::string>& slot_names, const std::string& where) {
  if (ref.kind == ValueRef::Kind::Slot && !slot_names.contains(ref.name)) {
    throw Error(ErrorCode::InvalidBinding, where + ": undeclared slot {" + ref.name + "}");
  }
  if (ref.kind == ValueRef::Kind::Region && !is_region_field(ref.name)) {
    throw Error(ErrorCode::InvalidBinding, where + ": unknown region field " + ref.name);
  }
}

PredicateSpec parse_predicate(const nlohmann::json& j, const std::string& where) {
  PredicateSpec p;
  p.signal = j.at("signal").get<std::string>();
  if (find_signal(p.signal) == nullptr) throw Error(ErrorCode::InvalidBinding, where + ": unknown signal " + p.signal);
  auto cmp = parse_comparator(j.at("cmp").get<std::string>());
  if (!cmp || *cmp == Comparator::Gt || *cmp == Comparator::Lt) {
    throw Error(ErrorCode::ParseError, where + ": validator comparator must be one of ==, !=, >=, <=");
  }
  p.cmp = *cmp;
  p.value = parse_value_ref(j.at("value"));
  return p;
}

TaskTemplate template_from_json(const nlohmann::json& j, const std::string& base_dir) {
  TaskTemplate t;
  t.template_id = j.at("template_id").get<std::string>();
  const std::string& where = t.template_id;
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw Error(ErrorCode::ParseError, where + ": missing field '" + name + "'");
    return j.at(name);
  };
  auto category = parse_category(field("category").get<std::string>());
  if (!category) throw Error(ErrorCode::ParseError, where + ": field 'category' has unknown value");
  t.category = *category;
  auto area = parse_area(field("functional_area").get<std::string>());
  if (!area) throw Error(ErrorCode::ParseError, where + ": field 'functional_area' has unknown value");
  t.functional_area = *area;
  t.instruction_template = field("instruction").get<std::string>();

  std::set<std::string> slot_names;
  for (const auto& s : j.value("slots", nlohmann::json::array())) {
    SlotSpec slot;
    slot.name = s.at("name").get<std::string>();
    if (s.contains("values")) {
      for (const auto& v : s.at("values")) slot.values.push_back(value_from_json(v));
    }
    if (s.contains("range")) slot.range = parse_range(s.at("range"));
    if (s.contains("climate_range")) {
      slot.range = parse_range(s.at("climate_range").at("mild"));
      slot.hot_range = parse_range(s.at("climate_range").at("hot"));
    }
    for (const auto& v : s.value("exclude", nlohmann::json::array())) slot.exclude.push_back(value_from_json(v));
    if (slot.values.empty() == !slot.range.has_value()) {
      throw Error(ErrorCode::ParseError, where + ": slot " + slot.name + " needs exactly one of values/range");
    }
    if (!slot_names.insert(slot.name).second) throw Error(ErrorCode::DuplicateId, where + ": slot " + slot.name);
    t.slots.push_back(std::move(slot));
  }
  for (const auto& name : placeholders(t.instruction_template)) {
    if (!slot_names.contains(name)) throw Error(ErrorCode::InvalidBinding, where + ": instruction uses undeclared {" + name + "}");
  }

  const auto init = j.value("init", nlohmann::json::object());
  for (const auto& [path, value] : init.items()) {
    if (find_signal(path) == nullptr) throw Error(ErrorCode::InvalidBinding, where + ": init targets unknown signal " + path);
    auto ref = parse_value_ref(value);
    check_ref(ref, slot_names, where + "/init/" + path);
    if (ref.kind == ValueRef::Kind::Literal) (void)override_signal(VehicleState{}, path, ref.literal);
    t.init_overrides.emplace_back(path, std::move(ref));
  }

  if (j.contains("scenario")) {
    t.scenario_ref = j.at("scenario").get<std::string>();
    const auto path = (fs::path(base_dir) / t.scenario_ref).string();
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidBinding, where + ": scenario file not found " + path);
    try {
      t.scenario = scenario_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
  }

  t.geo_requirements = j.value("geo_requirements", std::vector<std::string>{});
  t.default_region = j.value("default_region", std::string("default"));
  t.geo_dependent = j.value("geo_dependent", false);
  t.max_steps = j.value("max_steps", 15);
  if (t.max_steps <= 0) throw Error(ErrorCode::ParseError, where + ": max_steps must be positive");

  const auto& v = field("validator");
  if (v.contains("check")) {
    t.validator.check = v.at("check").get<std::string>();
    const auto* entry = find_check(t.validator.check);
    if (entry == nullptr) throw Error(ErrorCode::InvalidBinding, where + ": unknown check " + t.validator.check);
    for (const auto& param : entry->params) {
      if (!v.contains("args") || !v.at("args").contains(param)) {
        throw Error(ErrorCode::InvalidBinding, where + ": check " + entry->id + " needs argument " + param);
      }
      auto ref = parse_value_ref(v.at("args").at(param));
      check_ref(ref, slot_names, where + "/validator/" + param);
      t.validator.args.emplace(param, std::move(ref));
    }
  } else if (v.contains("all")) {
    for (const auto& p : v.at("all")) {
      auto pred = parse_predicate(p, where + "/validator");
      check_ref(pred.value, slot_names, where + "/validator/" + pred.signal);
      t.validator.all.push_back(std::move(pred));
    }
    if (t.validator.all.empty()) throw Error(ErrorCode::ParseError, where + ": empty validator");
  } else {
    throw Error(ErrorCode::ParseError, where + ": validator needs 'check' or 'all'");
  }
  return t;
}

std::vector<Value> materialize(const NumericRange& r) {
  std::vector<Value> out;
  const auto n = static_cast<std::int64_t>(std::floor((r.max - r.min) / r.step + 1e-9));
  for (std::int64_t i = 0; i <= n; ++i) {
    double v = r.min + static_cast<double>(i) * r.step;
    if (r.integral) {
      out.emplace_back(static_cast<std::int64_t>(std::llround(v)));
    } else {
      out.emplace_back(quantize_tenth(v));
    }
  }
  return out;
}

}  // namespace

VehicleState initial_state(const TaskInstance& inst) {
  VehicleState state;
  for (const auto& [path, value] : inst.init_overrides) state = override_signal(state, path, value);
  for (const auto& entry : inst.scenario.entries) {
    if (entry.t_s > 0.0) break;
    for (const auto& [path, value] : entry.set) state = override_signal(state, path, value);
    if (entry.alert) state.safety.active_alerts.push_back(*entry.alert);
  }
  state.system.sim_clock = 0.0;
  return state;
}

std::string_view to_string(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(FunctionalArea a) { return kAreaNames[static_cast<std::size_t>(a)]; }

std::optional<Category> parse_category(std::string_view s) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == s) return static_cast<Category>(i);
  }
  return std::nullopt;
}

std::optional<FunctionalArea> parse_area(std::string_view s) {
  for (std::size_t i = 0; i < kAreaNames.size(); ++i) {
    if (kAreaNames[i] == s) return static_cast<FunctionalArea>(i);
  }
  return std::nullopt;
}

std::vector<Value> SlotSpec::domain(const RegionProfile& region) const {
  std::vector<Value> out;
  if (!values.empty()) {
    out = values;
  } else {
    out = materialize(region.climate.heat_prone && hot_range ? *hot_range : *range);
  }
  std::erase_if(out, [this](const Value& v) {
    return std::any_of(exclude.begin(), exclude.end(), [&v](const Value& x) { return values_equal(v, x); });
  });
  return out;
}

const std::vector<CatalogEntry>& validator_catalog() {
  using K = ValueRef::Kind;
  auto lit = [](Value v) { return ValueRef{K::Literal, std::move(v), {}}; };
  auto param = [](std::string name) { return ValueRef{K::Slot, {}, std::move(name)}; };
  static const std::vector<CatalogEntry> catalog{
      {"check_fan_speed_max", {}, {{"hvac.fan_speed", Comparator::Eq, lit(std::int64_t{6})}}, "hvac.fan_speed == 6"},
      {"check_driver_seat_heater_enable", {}, {{"hvac.seat_heater_driver", Comparator::Ge, lit(std::int64_t{1})}},
       "hvac.seat_heater_driver >= 1"},
      {"check_ac_auto", {}, {{"hvac.ac_mode", Comparator::Eq, lit(std::string("Auto"))}}, "hvac.ac_mode == Auto"},
      {"check_media_play", {}, {{"media.playing", Comparator::Eq, lit(true)}}, "media.playing == true"},
      {"check_front_defroster_enable", {}, {{"hvac.defrost_front", Comparator::Eq, lit(true)}},
       "hvac.defrost_front == true"},
      {"check_rear_defroster_enable", {}, {{"hvac.defrost_rear", Comparator::Eq, lit(true)}},
       "hvac.defrost_rear == true"},
      {"check_raw_defroster_enable", {}, {{"hvac.defrost_rear", Comparator::Eq, lit(true)}},
       "alias of check_rear_defroster_enable"},
      {"check_screen_brightness", {}, {{"system.screen_brightness", Comparator::Ge, lit(std::int64_t{70})}},
       "system.screen_brightness >= 70"},
      {"check_safety_center_open", {}, {{"safety.notification_center_open", Comparator::Eq, lit(true)}},
       "safety.notification_center_open == true"},
      {"check_nav_destination_set", {}, {{"nav.destination", Comparator::Ne, lit(std::monostate{})}},
       "nav.destination != null"},
      {"check_temperature_setpoint", {"t"}, {{"hvac.setpoint_c", Comparator::Eq, param("t")}},
       "hvac.setpoint_c == t"},
      {"check_volume_at_most", {"v"}, {{"media.volume", Comparator::Le, param("v")}}, "media.volume <= v"},
      {"check_fog_lights_on", {}, {{"motion.fog_lights", Comparator::Eq, lit(true)}}, "motion.fog_lights == true"},
      {"check_high_beams_off", {}, {{"motion.high_beams", Comparator::Eq, lit(false)}}, "motion.high_beams == false"},
  };
  return catalog;
}

const CatalogEntry* find_check(std::string_view id) {
  for (const auto& e : validator_catalog()) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

nlohmann::json to_json(const TaskInstance& inst) {
  nlohmann::json slots = nlohmann::json::object();
  for (const auto& [k, v] : inst.bound_slots) slots[k] = value_to_json(v);
  nlohmann::json validator = nlohmann::json::array();
  for (const auto& c : inst.validator) {
    validator.push_back({{"signal", c.signal}, {"cmp", to_string(c.cmp)}, {"value", value_to_json(c.literal)}});
  }
  return {{"template_id", inst.template_id},
          {"category", to_string(inst.category)},
          {"functional_area", to_string(inst.functional_area)},
          {"seed", inst.seed},
          {"region_id", inst.region_id},
          {"instruction", inst.instruction},
          {"bound_slots", slots},
          {"validator_name", inst.validator_name},
          {"validator", validator},
          {"max_steps", inst.max_steps},
          {"initial_digest", inst.initial_digest.hex()}};
}

std::vector<TaskTemplate> templates_from_json(const nlohmann::json& j, const std::string& base_dir) {
  const nlohmann::json& list = j.is_object() ? j.at("templates") : j;
  if (!list.is_array()) throw Error(ErrorCode::ParseError, "template file must hold an array");
  std::vector<TaskTemplate> out;
  std::set<std::string> ids;
  for (const auto& item : list) {
    TaskTemplate t;
    try {
      t = template_from_json(item, base_dir);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, item.value("template_id", std::string("?")) + ": " + e.what());
    }
    if (!ids.insert(t.template_id).second) throw Error(ErrorCode::DuplicateId, t.template_id);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TaskTemplate> load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  try {
    return templates_from_json(nlohmann::json::parse(text), fs::path(path).parent_path().string());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path + " (byte " + std::to_string(e.byte) + "): " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

const TaskTemplate* Suite::find(std::string_view template_id) const {
  for (const auto& t : templates) {
    if (t.template_id == template_id) return &t;
  }
  return nullptr;
}

const TaskTemplate& Suite::require(std::string_view template_id) const {
  const auto* t = find(template_id);
  if (t == nullptr) throw Error(ErrorCode::TaskNotFound, std::string(template_id));
  return *t;
}

Suite load_suite(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest_path + ": " + e.what());
  }
  Suite suite;
  suite.suite_version = manifest.at("suite_version").get<std::string>();
  const auto base = fs::path(manifest_path).parent_path();
  std::set<std::string> ids;
  for (const auto& file : manifest.at("templates")) {
    for (auto& t : load_templates((base / file.get<std::string>()).string())) {
      if (!ids.insert(t.template_id).second) throw Error(ErrorCode::DuplicateId, t.template_id);
      suite.templates.push_back(std::move(t));
    }
  }
  return suite;
}

std::string render_slot_value(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) {
    if (std::fabs(*d - std::round(*d)) < 1e-9) return std::to_string(static_cast<std::int64_t>(std::llround(*d)));
  }
  return value_to_string(v);
}

TaskInstance instantiate(const TaskTemplate& tmpl, std::uint64_t seed, const RegionProfile& region) {
  for (const auto& tag : tmpl.geo_requirements) {
    if (!region.has_tag(tag)) {
      throw Error(ErrorCode::GeoMismatch, tmpl.template_id + " requires region tag " + tag + ", " +
                                               region.region_id + " lacks it");
    }
  }
  TaskInstance inst;
  inst.template_id = tmpl.template_id;
  inst.category = tmpl.category;
  inst.functional_area = tmpl.functional_area;
  inst.geo_dependent = tmpl.geo_dependent;
  inst.seed = seed;
  inst.region_id = region.region_id;
  inst.max_steps = tmpl.max_steps;

  // Bindings walk the product of slot domains with a stride coprime to its
  // size, so any run of consecutive seeds shorter than the product is
  // collision-free. Keyed by (template_id, seed) only.
  std::vector<std::vector<Value>> domains;
  std::uint64_t total = 1;
  for (const auto& slot : tmpl.slots) {
    domains.push_back(slot.domain(region));
    if (domains.back().empty()) {
      throw Error(ErrorCode::InvalidBinding, tmpl.template_id + ": empty domain for " + slot.name);
    }
    total *= domains.back().size();
  }
  const auto key = fnv1a(tmpl.template_id);
  std::uint64_t stride = 1 + (key >> 32) % total;
  while (std::gcd(stride, total) != 1) ++stride;
  const auto mixed = static_cast<unsigned __int128>(key % total) +
                     static_cast<unsigned __int128>(seed % total) * stride;
  auto index = static_cast<std::uint64_t>(mixed % total);
  for (std::size_t i = 0; i < tmpl.slots.size(); ++i) {
    const auto n = domains[i].size();
    inst.bound_slots.emplace_back(tmpl.slots[i].name, domains[i][index % n]);
    index /= n;
  }

  std::string text = tmpl.instruction_template;
  for (const auto& [name, value] : inst.bound_slots) {
    const std::string token = "{" + name + "}";
    for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos)) {
      const auto rendered = render_slot_value(value);
      text.replace(pos, token.size(), rendered);
      pos += rendered.size();
    }
  }
  inst.instruction = std::move(text);

  for (const auto& [path, ref] : tmpl.init_overrides) {
    inst.init_overrides.emplace_back(path, resolve(ref, inst.bound_slots, region));
  }
  if (tmpl.scenario) inst.scenario = *tmpl.scenario;

  if (!tmpl.validator.check.empty()) {
    const auto* entry = find_check(tmpl.validator.check);
    inst.validator_name = entry->id;
    for (const auto& pred : entry->predicates) {
      Value literal = pred.value.kind == ValueRef::Kind::Slot
                          ? resolve(tmpl.validator.args.at(pred.value.name), inst.bound_slots, region)
                          : pred.value.literal;
      inst.validator.push_back({pred.signal, pred.cmp, std::move(literal)});
    }
  } else {
    inst.validator_name = "predicates";
    for (const auto& pred : tmpl.validator.all) {
      inst.validator.push_back({pred.signal, pred.cmp, resolve(pred.value, inst.bound_slots, region)});
    }
  }

  inst.initial_digest = snapshot_digest(initial_state(inst));
  return inst;
}

const RegionProfile& choose_region(const TaskTemplate& tmpl, const RegionKB& kb, std::string_view requested) {
  if (!requested.empty()) {
    const auto& r = kb.require(requested);
    if (std::all_of(tmpl.geo_requirements.begin(), tmpl.geo_requirements.end(),
                    [&r](const std::string& tag) { return r.has_tag(tag); })) {
      return r;
    }
  }
  return kb.require(tmpl.default_region);
}

EpisodeStart initialize_episode(const TaskInstance& inst, const RegionKB& kb) {
  const auto& region = kb.require(inst.region_id);
  EpisodeStart start;
  start.state = initial_state(inst);
  start.track = start_track(region, 0.0);
  start.script = inst.scenario;
  return start;
}

bool validate(const TaskInstance& inst, const VehicleState& state) {
  return std::all_of(inst.validator.begin(), inst.validator.end(),
                     [&state](const Condition& c) { return evaluate(c, state); });
}

}  // namespace autocab
