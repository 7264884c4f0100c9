#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "autocab/geo.hpp"
#include "autocab/gui.hpp"
#include "autocab/tasks.hpp"
#include "autocab/vehicle.hpp"

namespace autocab {

inline constexpr std::string_view kEngineVersion = "autocab-engine/1.0";

// Everything sessions share. Loaded once, never mutated.
struct Assets {
  std::string data_dir;
  Suite suite;
  RegionKB kb;
  LayoutSet layouts;
  std::vector<BBox> outage_zones;

  static std::shared_ptr<const Assets> load(const std::string& data_dir, const std::string& manifest = {});
};

// AUTOCAB_DATA_DIR from the environment, else the compiled-in source tree.
std::string default_data_dir();

struct ModalityConfig {
  bool a11y = true;
  bool screen = false;
  bool gps = false;

  bool operator==(const ModalityConfig&) const = default;
};

nlohmann::json to_json(const ModalityConfig& m);
ModalityConfig modality_config_from_json(const nlohmann::json& j);

enum class NetworkStatus { Online, Offline };
std::string_view to_string(NetworkStatus s);

struct Observation {
  int step_index = 0;
  std::string instruction;
  ScreenId screen_id = ScreenId::Home;
  std::optional<UiTree> a11y;
  // Screen modality: SoM map and digests of the raw and annotated frames.
  // Pixels are rendered on demand from `frame`.
  std::optional<SomMap> som_map;
  std::string screen_sha;
  std::string som_sha;
  std::shared_ptr<const UiTree> frame;
  std::optional<GeoFix> gps;
  std::vector<std::pair<std::string, Value>> signals;
  NetworkStatus network = NetworkStatus::Online;
  std::string event;  // what the previous action did

  const Value* signal(std::string_view path) const;
  bool has_screen() const { return frame != nullptr; }
  PixelBuffer screen() const;         // throws ModalityViolation without the screen modality
  AnnotatedScreen som_screen() const;
};

struct FrameDigests {
  std::string screen_sha;
  std::string som_sha;
  SomMap som_map;
};

// Digests of render(tree) and its SoM annotation, memoized process-wide.
FrameDigests frame_digests(const UiTree& tree);

// Canonical form; pixels enter through their digests.
nlohmann::json canonical_json(const Observation& obs);
std::string observation_digest(const Observation& obs);

// Wire form. The PNG is only encoded when requested.
nlohmann::json to_wire_json(const Observation& obs, bool include_png);

enum class TaskStatus { Complete, Infeasible };

struct TapAction {
  std::optional<int> som_index;
  int x = 0;
  int y = 0;
  bool operator==(const TapAction&) const = default;
};
struct SwipeAction {
  int from_x = 0;
  int from_y = 0;
  int to_x = 0;
  int to_y = 0;
  bool operator==(const SwipeAction&) const = default;
};
struct InputTextAction {
  int som_index = 0;
  std::string text;
  bool operator==(const InputTextAction&) const = default;
};
struct ApiCallAction {
  std::string name;
  std::map<std::string, std::string> args;
  bool operator==(const ApiCallAction&) const = default;
};
struct StatusAction {
  TaskStatus status = TaskStatus::Complete;
  bool operator==(const StatusAction&) const = default;
};
struct WaitAction {
  bool operator==(const WaitAction&) const = default;
};
// Whatever the agent produced that could not be understood. Still consumes a step.
struct InvalidAction {
  std::string reason;
  std::string raw;
  bool operator==(const InvalidAction&) const = default;
};

using Action = std::variant<TapAction, SwipeAction, InputTextAction, ApiCallAction, StatusAction, WaitAction,
                            InvalidAction>;

inline constexpr std::array<std::string_view, 2> kApiCatalog{"open_safety_center", "raise_safety_alert"};

nlohmann::json to_json(const Action& action);
Action action_from_json(const nlohmann::json& j);  // throws SchemaViolation
std::string describe(const Action& action);

struct StepResult {
  Observation obs;
  bool done = false;
  std::optional<int> reward;
};

enum class Termination { Status, MaxSteps, AgentFailure, Timeout, ClientEnd };
std::string_view to_string(Termination t);
std::optional<Termination> parse_termination(std::string_view s);

class Environment {
 public:
  explicit Environment(std::shared_ptr<const Assets> assets);

  Observation reset(const TaskInstance& inst, const ModalityConfig& config);
  StepResult step(const Action& action);

  bool active() const { return active_; }
  int steps_used() const { return steps_; }
  const VehicleState& state() const { return state_; }
  ScreenId screen() const { return screen_; }
  const GeoTrack& track() const { return track_; }
  const TaskInstance& instance() const { return inst_; }
  const ModalityConfig& config() const { return config_; }
  const Assets& assets() const { return *assets_; }
  std::optional<Termination> termination() const { return termination_; }
  std::optional<int> reward() const { return reward_; }

  // Ends the episode early (client end, timeout, agent failure). Reward 0.
  void abort(Termination why);

  Observation observe() const;

 private:
  std::string apply(const Action& action);
  std::string apply_effect(const GuiEffect& effect);
  UiTree current_tree() const;

  std::shared_ptr<const Assets> assets_;
  TaskInstance inst_;
  ModalityConfig config_;
  VehicleState state_;
  GeoTrack track_;
  ScreenId screen_ = ScreenId::Home;
  int steps_ = 0;
  bool active_ = false;
  std::string last_event_;
  std::optional<Termination> termination_;
  std::optional<int> reward_;
};

struct StepRecord {
  int step = 0;
  Action action;
  std::string obs_digest;
  std::string chain_digest;  // sha256(prev chain + action json + obs digest)
  std::string event;
  std::string reasoning;
  std::int64_t reasoning_tokens = 0;
  std::string reflection;
};

struct Outcome {
  int reward = 0;
  int steps_used = 0;
  Termination terminated_by = Termination::MaxSteps;
  bool operator==(const Outcome&) const = default;
};

struct TraceHeader {
  std::string engine_version{kEngineVersion};
  std::string suite_version;
  std::string kb_version;
  std::string template_id;
  std::string category;
  std::string functional_area;
  bool geo_dependent = false;
  std::uint64_t seed = 0;
  std::string region_id;
  ModalityConfig modalities;
  std::string variant;
  std::string backend;
  int max_steps = 0;
  std::string instruction;
  std::string initial_digest;
  std::string obs0_digest;
  std::string created_at;  // wall clock; excluded from determinism checks
};

struct EpisodeTrace {
  TraceHeader header;
  std::vector<StepRecord> steps;
  Outcome outcome;
};

std::string chain_digest(const std::string& prev, const Action& action, const std::string& obs_digest);

// Incrementally records an episode driven from outside (server sessions).
class TraceRecorder {
 public:
  void begin(const Environment& env, const Observation& obs0, std::string variant, std::string backend);
  void record(const Action& action, const Observation& obs, std::string reasoning = {}, std::string reflection = {});
  void finish(const Environment& env);
  const EpisodeTrace& trace() const { return trace_; }
  EpisodeTrace& trace() { return trace_; }

 private:
  EpisodeTrace trace_;
  std::string chain_;
};

std::int64_t count_tokens(std::string_view text);

std::string trace_to_jsonl(const EpisodeTrace& trace);
EpisodeTrace trace_from_jsonl(std::string_view text);
std::string trace_file_name(const TraceHeader& h);
// Writes <dir>/<name> via a temporary file and rename. Returns the final path.
std::string write_trace(const EpisodeTrace& trace, const std::string& dir);
EpisodeTrace read_trace(const std::string& path);
// Removes stale temporaries left by interrupted writes.
int cleanup_trace_dir(const std::string& dir);

// Re-executes the recorded actions and checks every digest and the outcome.
Outcome replay(const EpisodeTrace& trace, std::shared_ptr<const Assets> assets);

struct AgentDecision {
  Action action;
  std::string reasoning;
};

class AgentHandle {
 public:
  virtual ~AgentHandle() = default;
  virtual std::string variant() const = 0;
  virtual std::string backend() const = 0;
  virtual ModalityConfig modalities() const = 0;
  virtual void begin(const TaskInstance& inst) = 0;
  virtual AgentDecision act(const Observation& obs) = 0;
  virtual std::string reflect(const Observation& before, const Action& action, const Observation& after) = 0;
};

struct EpisodeOptions {
  std::optional<int> max_steps;  // overrides the instance budget
  std::string created_at;        // filled by the caller; blank keeps traces wall-clock free
};

EpisodeTrace run_episode(AgentHandle& agent, const TaskInstance& inst, std::shared_ptr<const Assets> assets,
                         const EpisodeOptions& options = {});

std::string utc_now_iso();

}  // namespace autocab
