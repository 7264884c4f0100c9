#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "autocab/engine.hpp"
#include "autocab/geo.hpp"

namespace autocab {

enum class Variant { T3A, M3A, ASURADA };
enum class Backend { Scripted, External };

std::string_view to_string(Variant v);
std::string_view to_string(Backend b);
std::optional<Variant> parse_variant(std::string_view s);  // case-insensitive
std::optional<Backend> parse_backend(std::string_view s);

// T3A: a11y only. M3A: a11y + screen. ASURADA: a11y + screen + gps.
ModalityConfig modalities_for(Variant v);

struct AgentConfig {
  Variant variant = Variant::ASURADA;
  Backend backend = Backend::Scripted;
  std::string prompt_profile = "default";
  std::size_t memory_capacity = 8;
  std::string endpoint;         // host:port of an External completion server
  double step_timeout_s = 60.0;
};

struct ActionPlan {
  std::string reasoning;
  Action action;
  std::optional<double> confidence;
};

// First well-formed JSON object in `text`; either a plan {"reasoning", "action"}
// or a bare action. Indices are checked against `valid_indices` when given.
ActionPlan parse_action_plan(std::string_view text, const std::set<int>* valid_indices = nullptr);

// SoM indices an agent may reference in this observation.
std::set<int> valid_indices(const Observation& obs);

enum class OutcomeTag { Effective, Ineffective, Invalid };
std::string_view to_string(OutcomeTag t);

struct MemoryEntry {
  int step = 0;
  std::string summary;
  OutcomeTag tag = OutcomeTag::Effective;
};

class MemoryStore {
 public:
  explicit MemoryStore(std::size_t capacity) : capacity_(capacity) {}
  void append(MemoryEntry entry);
  const std::deque<MemoryEntry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<MemoryEntry> entries_;
};

struct Reflection {
  std::vector<std::string> changes;  // "path: a→b"
  std::string summary;
  OutcomeTag tag = OutcomeTag::Effective;
};

Reflection diff_observations(const Observation& before, const Observation& after);

struct PromptProfile {
  std::string profile_id;
  std::string preamble;
  std::string action_schema;

  static PromptProfile load(const std::string& path);
  static PromptProfile builtin();
};

inline constexpr std::string_view kSectionInstruction = "### INSTRUCTION";
inline constexpr std::string_view kSectionA11y = "### ACCESSIBILITY TREE";
inline constexpr std::string_view kSectionScreen = "### SCREEN";
inline constexpr std::string_view kSectionGps = "### GPS";
inline constexpr std::string_view kSectionGeo = "### GEO CONTEXT";
inline constexpr std::string_view kSectionSignals = "### VEHICLE SIGNALS";
inline constexpr std::string_view kSectionMemory = "### MEMORY";
inline constexpr std::string_view kSectionSchema = "### ACTION SCHEMA";

struct GeoContext {
  GeoFix fix;  // dead-reckoned when the receiver had lost the signal
  std::string region_id;
  std::vector<ContextReport> reports;  // SpeedRules, Weather, Equipment
};

// Vehicle state as far as an agent can see it: defaults overlaid with the
// observation's signals.
VehicleState state_from_signals(const Observation& obs);

GeoContext geo_context_stage(const Observation& obs, const RegionKB& kb);

std::string build_prompt(Variant variant, const Observation& obs, const GeoContext* context, const MemoryStore& memory,
                         const std::string& instruction, const PromptProfile& profile);

// Deterministic policies. The oracle (ASURADA) sees the validator and the
// geo context; the geo-blind variant refuses Driving Alignment tasks that
// show no visible evidence.
class ScriptedPolicy {
 public:
  ScriptedPolicy(Variant variant, std::shared_ptr<const Assets> assets);

  void begin(const TaskInstance& inst);
  ActionPlan decide(const Observation& obs, const GeoContext* context);

 private:
  struct Known {
    Value value;
    bool visible = false;  // seen in the current observation
  };

  std::optional<Known> lookup(const Observation& obs, const std::string& signal) const;
  ActionPlan navigate_to_show(const Observation& obs, const std::string& signal, bool needs_control);
  ActionPlan operate(const Observation& obs, const Condition& cond, const Value& current);
  bool visible_hazard(const Observation& obs) const;
  static bool geo_violation(const GeoContext& ctx);

  Variant variant_;
  std::shared_ptr<const Assets> assets_;
  TaskInstance inst_;
  std::map<std::string, Value> cache_;
  bool evidence_ = false;
  double clock_ = 0.0;
};

class PipelineAgent : public AgentHandle {
 public:
  PipelineAgent(AgentConfig config, std::shared_ptr<const Assets> assets, PromptProfile profile);
  ~PipelineAgent() override;

  std::string variant() const override { return std::string(to_string(config_.variant)); }
  std::string backend() const override { return std::string(to_string(config_.backend)); }
  ModalityConfig modalities() const override { return modalities_for(config_.variant); }
  void begin(const TaskInstance& inst) override;
  AgentDecision act(const Observation& obs) override;
  std::string reflect(const Observation& before, const Action& action, const Observation& after) override;

  const MemoryStore& memory() const { return memory_; }
  const std::string& last_prompt() const { return last_prompt_; }

 private:
  class Remote;

  AgentConfig config_;
  std::shared_ptr<const Assets> assets_;
  PromptProfile profile_;
  MemoryStore memory_;
  std::optional<ScriptedPolicy> scripted_;
  std::unique_ptr<Remote> remote_;
  std::string instruction_;
  std::string last_prompt_;
};

std::unique_ptr<AgentHandle> make_agent(const AgentConfig& config, std::shared_ptr<const Assets> assets);

}  // namespace autocab
