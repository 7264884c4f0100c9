#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <optional>
#include <string>

#include <unistd.h>

#include "autocab/engine.hpp"
#include "autocab/error.hpp"

namespace autocab::test {

inline std::shared_ptr<const Assets> assets() {
  static const auto a = Assets::load(default_data_dir());
  return a;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("autocab-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

// Uniform over each signal's domain, with the numeric grid respected.
inline VehicleState random_state(std::mt19937_64& rng) {
  VehicleState s;
  auto pick = [&rng](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  static const char* kTexts[] = {"Home", "Work", "Gare de Lyon", "fr-FR", "de-DE", "track-042"};
  for (const auto& info : signal_table()) {
    if (!info.set) continue;
    Value v;
    switch (info.type) {
      case SignalType::Bool:
        v = pick(0, 1) == 1;
        break;
      case SignalType::Int:
        v = pick(static_cast<std::int64_t>(info.min), static_cast<std::int64_t>(std::min(info.max, 1000.0)));
        break;
      case SignalType::Real: {
        const double hi = std::min(info.max, info.min + 400.0);
        const auto steps = static_cast<std::int64_t>(std::floor((hi - info.min) / info.step + 1e-9));
        v = info.min + static_cast<double>(pick(0, steps)) * info.step;
        break;
      }
      case SignalType::Enum:
        v = std::string(info.enum_values[static_cast<std::size_t>(pick(0, info.enum_values.size() - 1))]);
        break;
      case SignalType::Text:
        v = std::string(kTexts[pick(0, 5)]);
        break;
      case SignalType::OptText:
        if (pick(0, 2) != 0) v = std::string(kTexts[pick(0, 2)]);
        break;
    }
    s = override_signal(s, info.path, v);
  }
  const auto alerts = pick(0, 3);
  for (std::int64_t i = 0; i < alerts; ++i) s.safety.active_alerts.push_back({"test", "alert " + std::to_string(i), 0.0});
  return s;
}

// Code of the autocab::Error thrown by f, if any.
template <class F>
std::optional<ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace autocab::test
