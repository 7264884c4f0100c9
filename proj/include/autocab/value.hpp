#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "json.hpp"

namespace autocab {

// Typed signal value. Enumerations travel as their string names; an empty
// optional text (e.g. no destination) is std::monostate.
using Value = std::variant<std::monostate, bool, std::int64_t, double, std::string>;

enum class Comparator { Eq, Ne, Ge, Le, Gt, Lt };

std::string_view to_string(Comparator cmp);
std::optional<Comparator> parse_comparator(std::string_view text);

// Numeric values compare across int/double; everything else by exact variant.
bool compare_values(const Value& lhs, Comparator cmp, const Value& rhs);

bool values_equal(const Value& lhs, const Value& rhs);
std::optional<double> as_number(const Value& v);

std::string value_to_string(const Value& v);
nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

// Rounds to one decimal and removes negative zero.
double quantize_tenth(double v);

}  // namespace autocab
