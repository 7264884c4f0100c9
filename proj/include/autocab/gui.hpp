#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "autocab/value.hpp"
#include "autocab/vehicle.hpp"

namespace autocab {

inline constexpr int kScreenWidth = 1280;
inline constexpr int kScreenHeight = 720;

enum class ScreenId { Home, HVAC, Media, Maps, Comms, System, Apps, SafetyCenter };

inline constexpr std::array<ScreenId, 8> kAllScreens{
    ScreenId::Home, ScreenId::HVAC, ScreenId::Media, ScreenId::Maps,
    ScreenId::Comms, ScreenId::System, ScreenId::Apps, ScreenId::SafetyCenter};

std::string_view to_string(ScreenId id);
std::optional<ScreenId> parse_screen_id(std::string_view name);

enum class Role { Button, Toggle, Slider, Label, List, Screen, TextField };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view name);
bool is_interactable_role(Role role);

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool contains(const Rect& r) const {
    return r.x >= x && r.y >= y && r.x + r.w <= x + w && r.y + r.h <= y + h;
  }
  int center_x() const { return x + w / 2; }
  int center_y() const { return y + h / 2; }
  bool operator==(const Rect&) const = default;
};

struct NavigateTo {
  ScreenId screen;
  bool operator==(const NavigateTo&) const = default;
};

struct NoOp {
  bool operator==(const NoOp&) const = default;
};

using GuiEffect = std::variant<ControlCommand, NavigateTo, NoOp>;

std::string describe(const GuiEffect& effect);
nlohmann::json to_json(const GuiEffect& effect);

// What a widget does when operated. Not part of the agent-visible tree.
struct WidgetBinding {
  std::string signal;                 // empty for pure navigation/labels
  std::optional<ControlOp> op;        // Button: Set/Increment/Decrement
  std::optional<Value> value;         // Button Set literal
  std::optional<ScreenId> navigate;   // nav buttons and app tiles
  bool operator==(const WidgetBinding&) const = default;
};

struct UiNode {
  int som_index = 0;  // 0 == no index (non-interactable)
  Role role = Role::Label;
  std::string label;
  Rect bounds;
  std::optional<Value> value;
  bool interactable = false;
  std::vector<UiNode> children;
  WidgetBinding binding;

  bool operator==(const UiNode&) const = default;
};

struct UiTree {
  ScreenId screen = ScreenId::Home;
  UiNode root;
  std::int64_t brightness = 100;  // system.screen_brightness at build time

  bool operator==(const UiTree&) const = default;
};

// Signal path a widget reads or drives, "screen.<Id>" for navigation
// widgets, empty otherwise.
std::string resource_id(const UiNode& node);

// Agent-facing JSON (resource ids only, no bindings).
nlohmann::json to_json(const UiNode& node);
nlohmann::json to_json(const UiTree& tree);

// Indented one-node-per-line text form used in prompts.
std::string serialize_a11y_text(const UiTree& tree);

// Pre-order walk helpers.
std::vector<const UiNode*> interactable_nodes(const UiTree& tree);
const UiNode* find_by_som_index(const UiTree& tree, int som_index);
const UiNode* find_by_label(const UiTree& tree, std::string_view label);

struct WidgetSpec {
  Role role = Role::Label;
  std::string label;
  Rect bounds;
  WidgetBinding binding;
  std::string source;  // List only: dynamic item source ("safety.active_alerts")
  std::vector<WidgetSpec> children;
};

struct ScreenLayout {
  ScreenId screen = ScreenId::Home;
  std::string title;
  std::optional<std::pair<std::string, std::string>> open_title;  // (bool signal, title when true)
  std::vector<WidgetSpec> widgets;
};

// Authored layouts for all eight screens; immutable after load.
class LayoutSet {
 public:
  static LayoutSet from_json(const nlohmann::json& j);
  static LayoutSet load(const std::string& path);

  const ScreenLayout& screen(ScreenId id) const;

 private:
  std::map<ScreenId, ScreenLayout> screens_;
};

UiTree build_ui_tree(const LayoutSet& layouts, const VehicleState& state, ScreenId screen);

struct PixelBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major RGBA

  bool operator==(const PixelBuffer&) const = default;
};

PixelBuffer render(const UiTree& tree);

using SomMap = std::map<int, Rect>;

struct AnnotatedScreen {
  PixelBuffer buffer;
  SomMap index_map;
};

AnnotatedScreen annotate_som(const UiTree& tree, const PixelBuffer& buf);

nlohmann::json to_json(const SomMap& map);

GuiEffect dispatch_tap(const UiTree& tree, int x, int y);
GuiEffect dispatch_swipe(const UiTree& tree, int from_x, int from_y, int to_x, int to_y);
GuiEffect dispatch_text(const UiTree& tree, int som_index, const std::string& text);

// The effect a node produces when tapped at (x, y); the hit-test result of
// dispatch_tap is fed through this.
GuiEffect node_tap_effect(const UiNode& node, int x, int y);

// Inverse of the slider mapping: the x coordinate whose tap sets `target`.
int slider_x_for(const UiNode& slider, double target);

std::vector<std::uint8_t> encode_png(const PixelBuffer& buf);

}  // namespace autocab
