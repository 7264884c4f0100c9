#include <gtest/gtest.h>

#include <set>

#include "autocab/tasks.hpp"
#include "support.hpp"

using namespace autocab;
using autocab::test::error_code_of;

namespace {

const Assets& A() { return *autocab::test::assets(); }

nlohmann::json one_template(nlohmann::json patch) {
  nlohmann::json t{{"template_id", "t_x"},
                   {"category", "ExplicitControl"},
                   {"functional_area", "HVAC"},
                   {"instruction", "Set the fan to {f}."},
                   {"slots", {{{"name", "f"}, {"range", {{"min", 1}, {"max", 6}, {"step", 1}}}}}},
                   {"validator", {{"all", {{{"signal", "hvac.fan_speed"}, {"cmp", "=="}, {"value", "{f}"}}}}}}};
  t.merge_patch(patch);
  return nlohmann::json::array({t});
}

}  // namespace

TEST(Tasks, SuiteLoadsAllTemplates) {
  EXPECT_EQ(A().suite.templates.size(), 48u);
  EXPECT_FALSE(A().suite.suite_version.empty());
  EXPECT_EQ(error_code_of([] { A().suite.require("nope"); }), ErrorCode::TaskNotFound);
}

TEST(Tasks, CoverageAcrossCategoriesAndAreas) {
  std::map<Category, int> per_category;
  std::map<FunctionalArea, int> per_area;
  for (const auto& t : A().suite.templates) {
    ++per_category[t.category];
    ++per_area[t.functional_area];
  }
  for (auto c : kAllCategories) EXPECT_GE(per_category[c], 5) << to_string(c);
  for (auto a : kAllAreas) EXPECT_GE(per_area[a], 2) << to_string(a);
}

TEST(Tasks, InstantiateIsDeterministic) {
  for (const auto& t : A().suite.templates) {
    const auto& region = choose_region(t, A().kb);
    const auto a = instantiate(t, 3, region);
    const auto b = instantiate(t, 3, region);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump()) << t.template_id;
  }
}

TEST(Tasks, SeedsBindDistinctSlotsUntilTheDomainRunsOut) {
  const auto& t = A().suite.require("ec_set_temperature");
  const auto& region = choose_region(t, A().kb);
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = instantiate(t, seed, region);
    ASSERT_EQ(inst.bound_slots.size(), 1u);
    EXPECT_TRUE(seen.insert(value_to_string(inst.bound_slots[0].second)).second) << seed;
  }
}

TEST(Tasks, EveryInstanceStartsUnsatisfied) {
  for (const auto& t : A().suite.templates) {
    const auto& region = choose_region(t, A().kb);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto inst = instantiate(t, seed, region);
      EXPECT_FALSE(validate(inst, initial_state(inst))) << t.template_id << " seed " << seed;
    }
  }
}

TEST(Tasks, GeoRequirementsAreEnforced) {
  const auto& t = A().suite.require("da_paris_overspeed");
  EXPECT_TRUE(t.geo_dependent);
  EXPECT_EQ(error_code_of([&] { instantiate(t, 0, A().kb.default_region()); }), ErrorCode::GeoMismatch);
  EXPECT_EQ(choose_region(t, A().kb).region_id, "paris_urban");
  EXPECT_EQ(choose_region(t, A().kb, "default").region_id, "paris_urban");
  const auto& plain = A().suite.require("ec_fan_speed_max");
  EXPECT_EQ(choose_region(plain, A().kb, "paris_urban").region_id, "paris_urban");
}

TEST(Tasks, CatalogChecksResolveToConditions) {
  const auto* rear = find_check("check_rear_defroster_enable");
  const auto* raw = find_check("check_raw_defroster_enable");
  ASSERT_NE(rear, nullptr);
  ASSERT_NE(raw, nullptr);
  EXPECT_EQ(raw->predicates.size(), rear->predicates.size());
  EXPECT_EQ(find_check("check_nothing"), nullptr);
  for (const auto& entry : validator_catalog()) {
    EXPECT_FALSE(entry.predicates.empty()) << entry.id;
    for (const auto& p : entry.predicates) EXPECT_NE(find_signal(p.signal), nullptr) << entry.id;
  }
  const auto inst = instantiate(A().suite.require("ec_fan_speed_max"), 0, A().kb.default_region());
  EXPECT_EQ(inst.validator_name, "check_fan_speed_max");
  VehicleState s;
  s.hvac.fan_speed = 6;
  EXPECT_TRUE(validate(inst, s));
}

TEST(Tasks, TemplateParsing) {
  const auto ok = templates_from_json(one_template(nlohmann::json::object()), ".");
  ASSERT_EQ(ok.size(), 1u);
  const auto inst = instantiate(ok[0], 0, A().kb.default_region());
  EXPECT_EQ(inst.instruction.find('{'), std::string::npos);

  EXPECT_EQ(error_code_of([] { templates_from_json(one_template({{"category", "Bogus"}}), "."); }),
            ErrorCode::ParseError);
  EXPECT_EQ(error_code_of([] { templates_from_json(one_template({{"instruction", "Set {g}."}}), "."); }),
            ErrorCode::InvalidBinding);
  EXPECT_EQ(error_code_of([] {
              templates_from_json(
                  one_template({{"validator", {{"all", {{{"signal", "hvac.nope"}, {"cmp", "=="}, {"value", 1}}}}}}}),
                  ".");
            }),
            ErrorCode::InvalidBinding);
  EXPECT_EQ(error_code_of([] { templates_from_json(one_template({{"validator", {{"check", "check_nothing"}, {"all", nullptr}}}}), "."); }),
            ErrorCode::InvalidBinding);
  EXPECT_EQ(error_code_of([] { templates_from_json(one_template({{"max_steps", 0}}), "."); }), ErrorCode::ParseError);
  auto twice = one_template(nlohmann::json::object());
  twice.push_back(twice[0]);
  EXPECT_EQ(error_code_of([&] { templates_from_json(twice, "."); }), ErrorCode::DuplicateId);
  EXPECT_EQ(error_code_of([] { load_suite("/nonexistent/manifest.json"); }), ErrorCode::IoError);
}

TEST(Tasks, ScenarioEntriesAtTimeZeroApplyAtStart) {
  const auto& t = A().suite.require("ea_rear_fogging");
  const auto inst = instantiate(t, 0, choose_region(t, A().kb));
  const auto s = initial_state(inst);
  EXPECT_FALSE(validate(inst, s));
  const auto start = initialize_episode(inst, A().kb);
  EXPECT_EQ(serialize_state(start.state), serialize_state(s));
}
