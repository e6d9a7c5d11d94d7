// Small shared helpers: seeding, sampling, text parsing.
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace impec {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

inline std::size_t uniform_index(Rng& gen, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen);
}

inline bool bernoulli(Rng& gen, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(gen) < p; }

std::vector<std::string> split(const std::string& text, char sep);
std::string trim(const std::string& text);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

int parse_int(const std::string& text, const std::string& what);
std::uint64_t parse_u64(const std::string& text, const std::string& what);
double parse_double(const std::string& text, const std::string& what);
std::vector<int> parse_int_list(const std::string& text, const std::string& what);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// `key = value` lines; '#' starts a comment. Throws ConfigError on malformed lines.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::string& path);

double mean_of(const std::vector<double>& xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev_of(const std::vector<double>& xs);

}  // namespace impec
