// Simulated labeler: ternary preferences through the Shepard-Luce rule.
#pragma once

#include <cstdint>
#include <string>

#include "impec/util.hpp"

namespace impec {

enum class PreferenceLabel { FirstPreferred, SecondPreferred, Equal };
std::string to_string(PreferenceLabel label);
PreferenceLabel parse_preference_label(const std::string& text);
/// Label of the swapped pair.
PreferenceLabel flip(PreferenceLabel label);

/// exp(beta r1) / (exp(beta r1) + exp(beta r2)), evaluated without overflow.
/// beta = +inf gives the deterministic limit (1, 0, or 0.5 on ties).
double luce_probability(double r1, double r2, double beta);

struct OracleConfig {
  double beta = 5.0;  // +inf: deterministic
  double equality_tolerance = 0.0;
};

class Oracle {
 public:
  explicit Oracle(OracleConfig config, std::uint64_t seed = 0);

  /// One query; increments the counter exactly once.
  PreferenceLabel compare(double return1, double return2);

  std::uint64_t query_count() const { return counter_; }
  const OracleConfig& config() const { return config_; }
  bool deterministic() const;

 private:
  OracleConfig config_;
  Rng gen_;
  std::uint64_t counter_ = 0;
};

}  // namespace impec
