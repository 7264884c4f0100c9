#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "autocab/geo.hpp"
#include "autocab/value.hpp"
#include "autocab/vehicle.hpp"

namespace autocab {

enum class Category { ExplicitControl, ImplicitIntent, DrivingAlignment, EnvironmentAlerts };
enum class FunctionalArea { Maps, HVAC, Road, Phenomenon, Media, Apps, System, Comms };

inline constexpr std::array<Category, 4> kAllCategories{
    Category::ExplicitControl, Category::ImplicitIntent, Category::DrivingAlignment, Category::EnvironmentAlerts};
inline constexpr std::array<FunctionalArea, 8> kAllAreas{
    FunctionalArea::Maps, FunctionalArea::HVAC,  FunctionalArea::Road,   FunctionalArea::Phenomenon,
    FunctionalArea::Media, FunctionalArea::Apps, FunctionalArea::System, FunctionalArea::Comms};

std::string_view to_string(Category c);
std::string_view to_string(FunctionalArea a);
std::optional<Category> parse_category(std::string_view s);
std::optional<FunctionalArea> parse_area(std::string_view s);

struct NumericRange {
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;
  bool integral = false;  // all of min/max/step were integers in the file
};

// A slot draws from a list of values, a numeric range, or a range chosen by
// the region's climate (heat_prone regions use `hot`).
struct SlotSpec {
  std::string name;
  std::vector<Value> values;
  std::optional<NumericRange> range;
  std::optional<NumericRange> hot_range;
  std::vector<Value> exclude;

  std::vector<Value> domain(const RegionProfile& region) const;
};

// Literal, "{slot}" reference, or "$region.<field>" reference.
struct ValueRef {
  enum class Kind { Literal, Slot, Region } kind = Kind::Literal;
  Value literal;
  std::string name;
};

struct PredicateSpec {
  std::string signal;
  Comparator cmp = Comparator::Eq;
  ValueRef value;
};

struct ValidatorSpec {
  std::string check;  // catalog id; empty for a plain conjunction
  std::map<std::string, ValueRef> args;
  std::vector<PredicateSpec> all;
};

struct CatalogEntry {
  std::string id;
  std::vector<std::string> params;
  std::vector<PredicateSpec> predicates;  // ValueRef::Slot names refer to params
  std::string doc;
};

// Named checks. check_raw_defroster_enable is an alias of the rear check.
const std::vector<CatalogEntry>& validator_catalog();
const CatalogEntry* find_check(std::string_view id);

struct TaskTemplate {
  std::string template_id;
  Category category = Category::ExplicitControl;
  FunctionalArea functional_area = FunctionalArea::HVAC;
  std::string instruction_template;
  std::vector<SlotSpec> slots;
  std::vector<std::pair<std::string, ValueRef>> init_overrides;
  std::optional<ScenarioScript> scenario;
  std::string scenario_ref;
  std::vector<std::string> geo_requirements;
  std::string default_region = "default";
  bool geo_dependent = false;
  ValidatorSpec validator;
  int max_steps = 15;
};

struct TaskInstance {
  std::string template_id;
  Category category = Category::ExplicitControl;
  FunctionalArea functional_area = FunctionalArea::HVAC;
  bool geo_dependent = false;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Value>> bound_slots;
  std::string instruction;
  std::string region_id;
  std::vector<std::pair<std::string, Value>> init_overrides;
  ScenarioScript scenario;
  std::vector<Condition> validator;
  std::string validator_name;
  int max_steps = 15;
  StateDigest initial_digest;
};

nlohmann::json to_json(const TaskInstance& inst);

std::vector<TaskTemplate> load_templates(const std::string& path);
std::vector<TaskTemplate> templates_from_json(const nlohmann::json& j, const std::string& base_dir);

struct Suite {
  std::string suite_version;
  std::vector<TaskTemplate> templates;

  const TaskTemplate* find(std::string_view template_id) const;
  const TaskTemplate& require(std::string_view template_id) const;
};

Suite load_suite(const std::string& manifest_path);

TaskInstance instantiate(const TaskTemplate& tmpl, std::uint64_t seed, const RegionProfile& region);

// Region for a template: `requested` when it satisfies the geo requirements,
// otherwise the template's default region.
const RegionProfile& choose_region(const TaskTemplate& tmpl, const RegionKB& kb, std::string_view requested = {});

struct EpisodeStart {
  VehicleState state;
  GeoTrack track;
  ScenarioScript script;
};

// Default state, then init overrides, then script entries at t <= 0.
VehicleState initial_state(const TaskInstance& inst);

EpisodeStart initialize_episode(const TaskInstance& inst, const RegionKB& kb);

bool validate(const TaskInstance& inst, const VehicleState& state);

std::string render_slot_value(const Value& v);

}  // namespace autocab
