#include "impec/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace impec {

std::string to_string(PreferenceLabel label) {
  switch (label) {
    case PreferenceLabel::FirstPreferred: return "first";
    case PreferenceLabel::SecondPreferred: return "second";
    case PreferenceLabel::Equal: return "equal";
  }
  return "?";
}

PreferenceLabel parse_preference_label(const std::string& text) {
  if (text == "first") return PreferenceLabel::FirstPreferred;
  if (text == "second") return PreferenceLabel::SecondPreferred;
  if (text == "equal") return PreferenceLabel::Equal;
  throw std::invalid_argument("unknown preference label '" + text + "'");
}

PreferenceLabel flip(PreferenceLabel label) {
  switch (label) {
    case PreferenceLabel::FirstPreferred: return PreferenceLabel::SecondPreferred;
    case PreferenceLabel::SecondPreferred: return PreferenceLabel::FirstPreferred;
    default: return label;
  }
}

double luce_probability(double r1, double r2, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (std::isinf(beta)) return r1 > r2 ? 1.0 : (r1 < r2 ? 0.0 : 0.5);
  const double d = beta * (r1 - r2);
  // e^{-|d|} / (1 + e^{-|d|}) is the smaller of the two probabilities
  const double e = std::exp(-std::abs(d));
  const double small = e / (1.0 + e);
  return d >= 0.0 ? 1.0 - small : small;
}

Oracle::Oracle(OracleConfig config, std::uint64_t seed) : config_(config), gen_(seed) {
  if (!(config_.beta > 0.0)) throw ConfigError("oracle beta must be positive");
  if (!(config_.equality_tolerance >= 0.0)) throw ConfigError("equality tolerance must be non-negative");
}

bool Oracle::deterministic() const { return std::isinf(config_.beta); }

PreferenceLabel Oracle::compare(double r1, double r2) {
  ++counter_;
  if (std::abs(r1 - r2) <= config_.equality_tolerance) return PreferenceLabel::Equal;
  if (deterministic()) return r1 > r2 ? PreferenceLabel::FirstPreferred : PreferenceLabel::SecondPreferred;
  return bernoulli(gen_, luce_probability(r1, r2, config_.beta)) ? PreferenceLabel::FirstPreferred
                                                                 : PreferenceLabel::SecondPreferred;
}

}  // namespace impec
