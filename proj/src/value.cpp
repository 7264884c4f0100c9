#include "autocab/value.hpp"

#include <cmath>
#include <cstdio>

#include "autocab/error.hpp"

namespace autocab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSignal: return "UnknownSignal";
    case ErrorCode::ReadOnlySignal: return "ReadOnlySignal";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::NonPositiveDt: return "NonPositiveDt";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::UnknownIndex: return "UnknownIndex";
    case ErrorCode::NotATextField: return "NotATextField";
    case ErrorCode::UnknownQueryKind: return "UnknownQueryKind";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidBinding: return "InvalidBinding";
    case ErrorCode::GeoMismatch: return "GeoMismatch";
    case ErrorCode::UnknownRegion: return "UnknownRegion";
    case ErrorCode::TaskNotFound: return "TaskNotFound";
    case ErrorCode::SessionInactive: return "SessionInactive";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::NoJsonFound: return "NoJsonFound";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::UnknownSomIndex: return "UnknownSomIndex";
    case ErrorCode::ModalityViolation: return "ModalityViolation";
    case ErrorCode::OracleStuck: return "OracleStuck";
    case ErrorCode::EmptyTraceSet: return "EmptyTraceSet";
    case ErrorCode::AgentFailure: return "AgentFailure";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(Comparator cmp) {
  switch (cmp) {
    case Comparator::Eq: return "==";
    case Comparator::Ne: return "!=";
    case Comparator::Ge: return ">=";
    case Comparator::Le: return "<=";
    case Comparator::Gt: return ">";
    case Comparator::Lt: return "<";
  }
  return "?";
}

std::optional<Comparator> parse_comparator(std::string_view text) {
  if (text == "==") return Comparator::Eq;
  if (text == "!=") return Comparator::Ne;
  if (text == ">=" || text == "≥") return Comparator::Ge;
  if (text == "<=" || text == "≤") return Comparator::Le;
  if (text == ">") return Comparator::Gt;
  if (text == "<") return Comparator::Lt;
  return std::nullopt;
}

std::optional<double> as_number(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

bool values_equal(const Value& lhs, const Value& rhs) {
  auto a = as_number(lhs);
  auto b = as_number(rhs);
  if (a && b) return std::fabs(*a - *b) < 1e-9;
  return lhs == rhs;
}

bool compare_values(const Value& lhs, Comparator cmp, const Value& rhs) {
  switch (cmp) {
    case Comparator::Eq: return values_equal(lhs, rhs);
    case Comparator::Ne: return !values_equal(lhs, rhs);
    default: break;
  }
  auto a = as_number(lhs);
  auto b = as_number(rhs);
  if (!a || !b) return false;  // ordering is only defined on numbers
  constexpr double kEps = 1e-9;
  switch (cmp) {
    case Comparator::Ge: return *a >= *b - kEps;
    case Comparator::Le: return *a <= *b + kEps;
    case Comparator::Gt: return *a > *b + kEps;
    case Comparator::Lt: return *a < *b - kEps;
    default: return false;
  }
}

double quantize_tenth(double v) {
  double q = std::round(v * 10.0) / 10.0;
  return q == 0.0 ? 0.0 : q;
}

std::string value_to_string(const Value& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "null"; }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.1f", quantize_tenth(d));
      return buf;
    }
    std::string operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, v);
}

nlohmann::json value_to_json(const Value& v) {
  struct Visitor {
    nlohmann::json operator()(std::monostate) const { return nullptr; }
    nlohmann::json operator()(bool b) const { return b; }
    nlohmann::json operator()(std::int64_t i) const { return i; }
    nlohmann::json operator()(double d) const { return d; }
    nlohmann::json operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, v);
}

Value value_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error(ErrorCode::TypeMismatch, "unsupported JSON value " + j.dump());
}

}  // namespace autocab
