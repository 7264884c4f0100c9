#include "autocab/gui.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "autocab/error.hpp"
#include "font5x7.hpp"

namespace autocab {

namespace {

constexpr std::array<std::string_view, 8> kScreenNames{"Home", "HVAC", "Media", "Maps",
                                                       "Comms", "System", "Apps", "SafetyCenter"};
constexpr std::array<std::string_view, 8> kNavLabels{"Home", "Climate", "Media", "Maps",
                                                     "Phone", "Settings", "Apps", "Safety"};
constexpr std::array<std::string_view, 7> kRoleNames{"Button", "Toggle", "Slider", "Label",
                                                     "List", "Screen", "TextField"};

constexpr int kHeaderHeight = 60;
constexpr int kNavTop = 640;
constexpr int kListRowHeight = 40;
constexpr int kTextScale = 2;

Rect rect_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::ParseError, "bounds must be [x, y, w, h]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

WidgetSpec widget_from_json(const nlohmann::json& j, const std::string& where) {
  WidgetSpec w;
  auto role = parse_role(j.at("role").get<std::string>());
  if (!role) throw Error(ErrorCode::ParseError, where + ": unknown role " + j.at("role").dump());
  w.role = *role;
  w.label = j.at("label").get<std::string>();
  w.bounds = rect_from_json(j.at("bounds"));
  const std::string here = where + "/" + w.label;
  if (j.contains("binding")) {
    w.binding.signal = j.at("binding").get<std::string>();
    const auto* info = find_signal(w.binding.signal);
    if (info == nullptr) throw Error(ErrorCode::InvalidBinding, here + ": unknown signal " + w.binding.signal);
    bool operable = w.role == Role::Toggle || w.role == Role::Slider || w.role == Role::TextField ||
                    (w.role == Role::Button && j.contains("op"));
    if (operable && !info->writable) {
      throw Error(ErrorCode::InvalidBinding, here + ": widget operates read-only " + w.binding.signal);
    }
    if (w.role == Role::Toggle && info->type != SignalType::Bool) {
      throw Error(ErrorCode::InvalidBinding, here + ": toggle needs a boolean signal");
    }
    if (w.role == Role::Slider && info->type != SignalType::Int && info->type != SignalType::Real) {
      throw Error(ErrorCode::InvalidBinding, here + ": slider needs a numeric signal");
    }
  }
  if (j.contains("op")) {
    auto op = parse_control_op(j.at("op").get<std::string>());
    if (!op || w.binding.signal.empty()) throw Error(ErrorCode::InvalidBinding, here + ": bad op");
    w.binding.op = op;
    if (j.contains("value")) w.binding.value = value_from_json(j.at("value"));
    if (*op == ControlOp::Set && !j.contains("value")) {
      throw Error(ErrorCode::InvalidBinding, here + ": set needs a value");
    }
  }
  if (j.contains("navigate")) {
    auto target = parse_screen_id(j.at("navigate").get<std::string>());
    if (!target) throw Error(ErrorCode::InvalidBinding, here + ": bad navigate target");
    w.binding.navigate = target;
  }
  if (w.role == Role::Button && !w.binding.op && !w.binding.navigate) {
    throw Error(ErrorCode::InvalidBinding, here + ": button without op or navigate");
  }
  if (w.role == Role::TextField && w.binding.signal.empty()) {
    throw Error(ErrorCode::InvalidBinding, here + ": text field without binding");
  }
  w.source = j.value("source", "");
  if (j.contains("children")) {
    for (const auto& c : j.at("children")) {
      auto child = widget_from_json(c, here);
      if (!w.bounds.contains(child.bounds)) {
        throw Error(ErrorCode::InvalidBinding, here + ": child " + child.label + " escapes parent bounds");
      }
      w.children.push_back(std::move(child));
    }
  }
  return w;
}

std::string display_value(const Value& v) {
  if (std::holds_alternative<std::monostate>(v)) return "-";
  return value_to_string(v);
}

UiNode node_from_spec(const WidgetSpec& spec, const VehicleState& state) {
  UiNode node;
  node.role = spec.role;
  node.label = spec.label;
  node.bounds = spec.bounds;
  node.binding = spec.binding;
  node.interactable = is_interactable_role(spec.role);
  if (!spec.binding.signal.empty() && spec.role != Role::Button) {
    node.value = query_signal(state, spec.binding.signal);
  }
  for (const auto& child : spec.children) node.children.push_back(node_from_spec(child, state));

  if (spec.role == Role::List && spec.source == "safety.active_alerts") {
    const int rows = std::max(0, (spec.bounds.h - kListRowHeight) / kListRowHeight);
    const auto& alerts = state.safety.active_alerts;
    node.value = static_cast<std::int64_t>(alerts.size());
    for (int i = 0; i < rows && i < static_cast<int>(alerts.size()); ++i) {
      UiNode row;
      row.role = Role::Label;
      row.label = "[" + alerts[i].kind + "] " + alerts[i].message;
      row.bounds = {spec.bounds.x + 4, spec.bounds.y + kListRowHeight * (i + 1), spec.bounds.w - 8,
                    kListRowHeight - 4};
      node.children.push_back(std::move(row));
    }
  }
  return node;
}

void number_nodes(UiNode& node, int& next) {
  node.som_index = node.interactable ? next++ : 0;
  for (auto& child : node.children) number_nodes(child, next);
}

template <typename F>
void walk(const UiNode& node, int depth, F&& fn) {
  fn(node, depth);
  for (const auto& child : node.children) walk(child, depth + 1, fn);
}

// ---- rasterizer -----------------------------------------------------------

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kBackground{18, 22, 30};
constexpr Rgb kHeaderFill{30, 36, 48};
constexpr Rgb kButtonFill{52, 73, 94};
constexpr Rgb kBorder{120, 140, 160};
constexpr Rgb kToggleOn{39, 174, 96};
constexpr Rgb kToggleOff{70, 70, 80};
constexpr Rgb kTrack{60, 60, 70};
constexpr Rgb kTrackFill{52, 152, 219};
constexpr Rgb kListFill{28, 32, 40};
constexpr Rgb kFieldFill{236, 236, 236};
constexpr Rgb kText{230, 230, 230};
constexpr Rgb kDarkText{20, 20, 20};
constexpr Rgb kTagFill{255, 214, 0};

class Canvas {
 public:
  explicit Canvas(PixelBuffer& buf) : buf_(buf) {}

  void fill(Rect r, Rgb c) {
    const int x0 = std::max(0, r.x), y0 = std::max(0, r.y);
    const int x1 = std::min(buf_.width, r.x + r.w), y1 = std::min(buf_.height, r.y + r.h);
    for (int y = y0; y < y1; ++y) {
      auto* p = &buf_.data[(static_cast<std::size_t>(y) * buf_.width + x0) * 4];
      for (int x = x0; x < x1; ++x, p += 4) {
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
        p[3] = 255;
      }
    }
  }

  void border(Rect r, Rgb c) {
    if (r.w <= 0 || r.h <= 0) return;
    fill({r.x, r.y, r.w, 1}, c);
    fill({r.x, r.y + r.h - 1, r.w, 1}, c);
    fill({r.x, r.y, 1, r.h}, c);
    fill({r.x + r.w - 1, r.y, 1, r.h}, c);
  }

  // Bitmap text, clipped to `clip`.
  void text(int x, int y, std::string_view s, Rgb c, Rect clip, int scale = kTextScale) {
    const int advance = (font::kGlyphWidth + 1) * scale;
    for (char ch : s) {
      const auto& g = font::glyph(ch);
      for (int col = 0; col < font::kGlyphWidth; ++col) {
        for (int row = 0; row < font::kGlyphHeight; ++row) {
          if (((g[col] >> row) & 1) == 0) continue;
          Rect px{x + col * scale, y + row * scale, scale, scale};
          fill(intersect(px, clip), c);
        }
      }
      x += advance;
      if (x >= clip.x + clip.w) break;
    }
  }

 private:
  static Rect intersect(Rect a, Rect b) {
    int x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
    int x1 = std::min(a.x + a.w, b.x + b.w), y1 = std::min(a.y + a.h, b.y + b.h);
    return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
  }

  PixelBuffer& buf_;
};

std::string node_text(const UiNode& node) {
  switch (node.role) {
    case Role::Toggle: {
      bool on = node.value && std::holds_alternative<bool>(*node.value) && std::get<bool>(*node.value);
      return node.label + (on ? "  ON" : "  OFF");
    }
    case Role::Slider:
    case Role::Label:
      return node.value ? node.label + ": " + display_value(*node.value) : node.label;
    case Role::TextField:
      if (node.value && !std::holds_alternative<std::monostate>(*node.value)) return display_value(*node.value);
      return node.label;
    default:
      return node.label;
  }
}

void draw_node(Canvas& canvas, const UiNode& node) {
  const Rect& b = node.bounds;
  const int text_y = b.y + std::max(2, (b.h - font::kGlyphHeight * kTextScale) / 2);
  Rgb text_color = kText;
  switch (node.role) {
    case Role::Screen:
      canvas.fill(b, kBackground);
      break;
    case Role::Button:
      canvas.fill(b, kButtonFill);
      canvas.border(b, kBorder);
      break;
    case Role::Toggle: {
      bool on = node.value && std::holds_alternative<bool>(*node.value) && std::get<bool>(*node.value);
      canvas.fill(b, on ? kToggleOn : kToggleOff);
      canvas.border(b, kBorder);
      break;
    }
    case Role::Slider: {
      canvas.fill(b, kTrack);
      const auto* info = find_signal(node.binding.signal);
      if (info != nullptr && node.value) {
        double v = as_number(*node.value).value_or(info->min);
        double frac = info->max > info->min ? (v - info->min) / (info->max - info->min) : 0.0;
        canvas.fill({b.x, b.y, static_cast<int>(std::lround(frac * b.w)), b.h}, kTrackFill);
      }
      canvas.border(b, kBorder);
      break;
    }
    case Role::List:
      canvas.fill(b, kListFill);
      canvas.border(b, kBorder);
      break;
    case Role::TextField:
      canvas.fill(b, kFieldFill);
      canvas.border(b, kBorder);
      text_color = kDarkText;
      break;
    case Role::Label:
      break;
  }
  if (node.role == Role::List) {
    canvas.text(b.x + 8, b.y + 12, node.label, kText, b);
  } else if (node.role != Role::Screen) {
    canvas.text(b.x + 8, text_y, node_text(node), text_color, b);
  }
  for (const auto& child : node.children) draw_node(canvas, child);
}

double slider_value_at(const UiNode& node, const SignalInfo& info, double frac) {
  frac = std::clamp(frac, 0.0, 1.0);
  double raw = info.min + frac * (info.max - info.min);
  double snapped = info.min + std::round((raw - info.min) / info.step) * info.step;
  (void)node;
  return std::clamp(snapped, info.min, info.max);
}

Value typed_number(const SignalInfo& info, double v) {
  if (info.type == SignalType::Int) return static_cast<std::int64_t>(std::llround(v));
  return quantize_tenth(v);
}

void require_in_screen(const UiTree& tree, int x, int y) {
  if (!tree.root.bounds.contains(x, y)) {
    throw Error(ErrorCode::OutOfBounds, "(" + std::to_string(x) + ", " + std::to_string(y) + ")");
  }
}

const UiNode* hit_test(const UiTree& tree, int x, int y) {
  const UiNode* best = nullptr;
  int best_depth = -1;
  walk(tree.root, 0, [&](const UiNode& n, int depth) {
    // >= so that, at equal depth, the later node in pre-order wins.
    if (n.interactable && n.bounds.contains(x, y) && depth >= best_depth) {
      best = &n;
      best_depth = depth;
    }
  });
  return best;
}

}  // namespace

std::string_view to_string(ScreenId id) { return kScreenNames[static_cast<std::size_t>(id)]; }

std::optional<ScreenId> parse_screen_id(std::string_view name) {
  for (std::size_t i = 0; i < kScreenNames.size(); ++i) {
    if (kScreenNames[i] == name) return static_cast<ScreenId>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Role role) { return kRoleNames[static_cast<std::size_t>(role)]; }

std::optional<Role> parse_role(std::string_view name) {
  for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
    if (kRoleNames[i] == name) return static_cast<Role>(i);
  }
  return std::nullopt;
}

bool is_interactable_role(Role role) {
  return role == Role::Button || role == Role::Toggle || role == Role::Slider || role == Role::TextField;
}

std::string describe(const GuiEffect& effect) {
  if (const auto* cmd = std::get_if<ControlCommand>(&effect)) {
    std::string s = std::string(to_string(cmd->op)) + " " + cmd->target;
    if (cmd->value) s += " = " + display_value(*cmd->value);
    return s;
  }
  if (const auto* nav = std::get_if<NavigateTo>(&effect)) return "NavigateTo " + std::string(to_string(nav->screen));
  return "NoOp";
}

nlohmann::json to_json(const GuiEffect& effect) {
  if (const auto* cmd = std::get_if<ControlCommand>(&effect)) return {{"control", to_json(*cmd)}};
  if (const auto* nav = std::get_if<NavigateTo>(&effect)) return {{"navigate", to_string(nav->screen)}};
  return {{"noop", true}};
}

std::string resource_id(const UiNode& node) {
  if (!node.binding.signal.empty()) return node.binding.signal;
  if (node.binding.navigate) return "screen." + std::string(to_string(*node.binding.navigate));
  return {};
}

nlohmann::json to_json(const UiNode& node) {
  nlohmann::json j;
  if (node.som_index > 0) j["som_index"] = node.som_index;
  j["role"] = to_string(node.role);
  j["label"] = node.label;
  if (auto id = resource_id(node); !id.empty()) j["resource_id"] = id;
  j["bounds"] = {node.bounds.x, node.bounds.y, node.bounds.w, node.bounds.h};
  if (node.value) j["value"] = value_to_json(*node.value);
  j["interactable"] = node.interactable;
  if (!node.children.empty()) {
    j["children"] = nlohmann::json::array();
    for (const auto& c : node.children) j["children"].push_back(to_json(c));
  }
  return j;
}

nlohmann::json to_json(const UiTree& tree) {
  return {{"screen", to_string(tree.screen)}, {"root", to_json(tree.root)}};
}

std::string serialize_a11y_text(const UiTree& tree) {
  std::string out;
  walk(tree.root, 0, [&out](const UiNode& n, int depth) {
    out.append(static_cast<std::size_t>(depth) * 2, ' ');
    if (n.som_index > 0) out += "[" + std::to_string(n.som_index) + "] ";
    out += std::string(to_string(n.role)) + " \"" + n.label + "\"";
    if (auto id = resource_id(n); !id.empty()) out += " id=" + id;
    if (n.value) out += " value=" + display_value(*n.value);
    out += " @(" + std::to_string(n.bounds.x) + "," + std::to_string(n.bounds.y) + "," +
           std::to_string(n.bounds.w) + "," + std::to_string(n.bounds.h) + ")\n";
  });
  return out;
}

std::vector<const UiNode*> interactable_nodes(const UiTree& tree) {
  std::vector<const UiNode*> out;
  walk(tree.root, 0, [&out](const UiNode& n, int) {
    if (n.interactable) out.push_back(&n);
  });
  return out;
}

const UiNode* find_by_som_index(const UiTree& tree, int som_index) {
  const UiNode* found = nullptr;
  walk(tree.root, 0, [&](const UiNode& n, int) {
    if (n.som_index == som_index && som_index > 0) found = &n;
  });
  return found;
}

const UiNode* find_by_label(const UiTree& tree, std::string_view label) {
  const UiNode* found = nullptr;
  walk(tree.root, 0, [&](const UiNode& n, int) {
    if (found == nullptr && n.label == label) found = &n;
  });
  return found;
}

LayoutSet LayoutSet::from_json(const nlohmann::json& j) {
  LayoutSet set;
  const Rect content{0, kHeaderHeight, kScreenWidth, kNavTop - kHeaderHeight};
  for (const auto& s : j.at("screens")) {
    ScreenLayout layout;
    auto id = parse_screen_id(s.at("screen").get<std::string>());
    if (!id) throw Error(ErrorCode::ParseError, "unknown screen " + s.at("screen").dump());
    layout.screen = *id;
    layout.title = s.at("title").get<std::string>();
    if (s.contains("open_title")) {
      const auto& ot = s.at("open_title");
      auto signal = ot.at("binding").get<std::string>();
      if (find_signal(signal) == nullptr) throw Error(ErrorCode::InvalidBinding, "open_title " + signal);
      layout.open_title = std::make_pair(signal, ot.at("title").get<std::string>());
    }
    for (const auto& w : s.at("widgets")) {
      auto spec = widget_from_json(w, layout.title);
      if (!content.contains(spec.bounds)) {
        throw Error(ErrorCode::InvalidBinding, layout.title + "/" + spec.label + ": outside content area");
      }
      layout.widgets.push_back(std::move(spec));
    }
    if (!set.screens_.emplace(*id, std::move(layout)).second) {
      throw Error(ErrorCode::DuplicateId, "screen " + s.at("screen").dump() + " defined twice");
    }
  }
  for (auto id : kAllScreens) {
    if (!set.screens_.contains(id)) throw Error(ErrorCode::ParseError, "missing layout for " + std::string(to_string(id)));
  }
  return set;
}

LayoutSet LayoutSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open layout file " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

const ScreenLayout& LayoutSet::screen(ScreenId id) const { return screens_.at(id); }

UiTree build_ui_tree(const LayoutSet& layouts, const VehicleState& state, ScreenId screen) {
  const auto& layout = layouts.screen(screen);
  std::string title = layout.title;
  if (layout.open_title) {
    auto v = query_signal(state, layout.open_title->first);
    if (std::holds_alternative<bool>(v) && std::get<bool>(v)) title = layout.open_title->second;
  }

  UiTree tree;
  tree.screen = screen;
  tree.brightness = state.system.screen_brightness;
  tree.root.role = Role::Screen;
  tree.root.label = title;
  tree.root.bounds = {0, 0, kScreenWidth, kScreenHeight};

  UiNode header;
  header.role = Role::Label;
  header.label = title;
  header.bounds = {0, 0, kScreenWidth, kHeaderHeight};
  tree.root.children.push_back(std::move(header));

  for (const auto& spec : layout.widgets) tree.root.children.push_back(node_from_spec(spec, state));

  UiNode nav;
  nav.role = Role::List;
  nav.label = "Navigation";
  nav.bounds = {0, kNavTop, kScreenWidth, kScreenHeight - kNavTop};
  const int cell = kScreenWidth / static_cast<int>(kAllScreens.size());
  for (std::size_t i = 0; i < kAllScreens.size(); ++i) {
    UiNode b;
    b.role = Role::Button;
    b.label = std::string(kNavLabels[i]);
    b.bounds = {static_cast<int>(i) * cell + 4, kNavTop + 8, cell - 8, kScreenHeight - kNavTop - 16};
    b.interactable = true;
    b.binding.navigate = kAllScreens[i];
    nav.children.push_back(std::move(b));
  }
  tree.root.children.push_back(std::move(nav));

  int next = 1;
  number_nodes(tree.root, next);
  return tree;
}

PixelBuffer render(const UiTree& tree) {
  PixelBuffer buf;
  buf.width = tree.root.bounds.w;
  buf.height = tree.root.bounds.h;
  buf.data.assign(static_cast<std::size_t>(buf.width) * buf.height * 4, 0);
  Canvas canvas(buf);
  draw_node(canvas, tree.root);

  const auto b = static_cast<std::uint32_t>(std::clamp<std::int64_t>(tree.brightness, 0, 100));
  if (b != 100) {
    for (std::size_t i = 0; i < buf.data.size(); i += 4) {
      for (std::size_t c = 0; c < 3; ++c) buf.data[i + c] = static_cast<std::uint8_t>((buf.data[i + c] * b + 50) / 100);
    }
  }
  return buf;
}

AnnotatedScreen annotate_som(const UiTree& tree, const PixelBuffer& buf) {
  AnnotatedScreen out{buf, {}};
  Canvas canvas(out.buffer);
  const Rect screen{0, 0, buf.width, buf.height};
  for (const auto* node : interactable_nodes(tree)) {
    const std::string digits = std::to_string(node->som_index);
    const int w = 4 + static_cast<int>(digits.size()) * (font::kGlyphWidth + 1) * kTextScale;
    const Rect tag{node->bounds.x, node->bounds.y, w, font::kGlyphHeight * kTextScale + 4};
    canvas.fill(tag, kTagFill);
    canvas.border(tag, kDarkText);
    canvas.text(tag.x + 3, tag.y + 2, digits, kDarkText, screen);
    out.index_map.emplace(node->som_index, node->bounds);
  }
  return out;
}

nlohmann::json to_json(const SomMap& map) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [idx, r] : map) j[std::to_string(idx)] = {r.x, r.y, r.w, r.h};
  return j;
}

GuiEffect node_tap_effect(const UiNode& node, int x, int y) {
  (void)y;
  const auto& b = node.binding;
  switch (node.role) {
    case Role::Toggle:
      return ControlCommand{b.signal, ControlOp::Toggle, std::nullopt};
    case Role::Button:
      if (b.navigate) return NavigateTo{*b.navigate};
      if (b.op) return ControlCommand{b.signal, *b.op, b.value};
      return NoOp{};
    case Role::Slider: {
      const auto* info = find_signal(b.signal);
      if (info == nullptr) return NoOp{};
      double frac = node.bounds.w > 1 ? static_cast<double>(x - node.bounds.x) / (node.bounds.w - 1) : 0.0;
      return ControlCommand{b.signal, ControlOp::Set, typed_number(*info, slider_value_at(node, *info, frac))};
    }
    default:
      return NoOp{};
  }
}

int slider_x_for(const UiNode& slider, double target) {
  const auto* info = find_signal(slider.binding.signal);
  if (info == nullptr || info->max <= info->min) return slider.bounds.x;
  double frac = std::clamp((target - info->min) / (info->max - info->min), 0.0, 1.0);
  return slider.bounds.x + static_cast<int>(std::lround(frac * (slider.bounds.w - 1)));
}

GuiEffect dispatch_tap(const UiTree& tree, int x, int y) {
  require_in_screen(tree, x, y);
  const UiNode* hit = hit_test(tree, x, y);
  if (hit == nullptr) return NoOp{};
  return node_tap_effect(*hit, x, y);
}

GuiEffect dispatch_swipe(const UiTree& tree, int from_x, int from_y, int to_x, int to_y) {
  require_in_screen(tree, from_x, from_y);
  require_in_screen(tree, to_x, to_y);
  if (from_x == to_x && from_y == to_y) return dispatch_tap(tree, from_x, from_y);
  const UiNode* hit = hit_test(tree, from_x, from_y);
  if (hit == nullptr || hit->role != Role::Slider) return NoOp{};
  const int dx = to_x - from_x;
  const int dy = to_y - from_y;
  if (std::abs(dx) < std::abs(dy)) return NoOp{};
  const auto* info = find_signal(hit->binding.signal);
  if (info == nullptr || !hit->value) return NoOp{};
  double current = as_number(*hit->value).value_or(info->min);
  double current_frac = (current - info->min) / (info->max - info->min);
  double frac = current_frac + static_cast<double>(dx) / std::max(1, hit->bounds.w - 1);
  return ControlCommand{hit->binding.signal, ControlOp::Set, typed_number(*info, slider_value_at(*hit, *info, frac))};
}

GuiEffect dispatch_text(const UiTree& tree, int som_index, const std::string& text) {
  const UiNode* node = find_by_som_index(tree, som_index);
  if (node == nullptr) throw Error(ErrorCode::UnknownIndex, std::to_string(som_index));
  if (node->role != Role::TextField) {
    throw Error(ErrorCode::NotATextField, std::to_string(som_index) + " is a " + std::string(to_string(node->role)));
  }
  return ControlCommand{node->binding.signal, ControlOp::Set, Value{text}};
}

std::vector<std::uint8_t> encode_png(const PixelBuffer& buf) {
  std::vector<std::uint8_t> raw;
  const std::size_t stride = static_cast<std::size_t>(buf.width) * 4;
  raw.reserve((stride + 1) * buf.height);
  for (int y = 0; y < buf.height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), buf.data.begin() + y * stride, buf.data.begin() + (y + 1) * stride);
  }
  uLongf zlen = compressBound(raw.size());
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), raw.size(), 6) != Z_OK) {
    throw Error(ErrorCode::IoError, "png deflate failed");
  }
  z.resize(zlen);

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  auto put32 = [](std::vector<std::uint8_t>& v, std::uint32_t n) {
    for (int s = 24; s >= 0; s -= 8) v.push_back(static_cast<std::uint8_t>(n >> s));
  };
  auto chunk = [&](const char* type, const std::vector<std::uint8_t>& payload) {
    put32(out, static_cast<std::uint32_t>(payload.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    put32(out, static_cast<std::uint32_t>(crc32(0, body.data(), static_cast<uInt>(body.size()))));
  };
  std::vector<std::uint8_t> ihdr;
  put32(ihdr, static_cast<std::uint32_t>(buf.width));
  put32(ihdr, static_cast<std::uint32_t>(buf.height));
  ihdr.insert(ihdr.end(), {8, 6, 0, 0, 0});  // 8-bit RGBA
  chunk("IHDR", ihdr);
  chunk("IDAT", z);
  chunk("IEND", {});
  return out;
}

}  // namespace autocab
