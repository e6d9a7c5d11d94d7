// Bucketed preference chain with model-assisted insertion sort.
#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "impec/oracle.hpp"
#include "impec/reward_model.hpp"

namespace impec {

class ChainFull : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Buckets ordered best first; each bucket holds equally preferred rollouts.
class PreferenceChain {
 public:
  explicit PreferenceChain(std::size_t max_size = 30) : max_size_(max_size) {}

  std::size_t num_buckets() const { return buckets_.size(); }
  std::size_t num_ranked() const { return index_.size(); }
  std::size_t max_size() const { return max_size_; }
  bool empty() const { return buckets_.empty(); }
  bool full() const { return index_.size() >= max_size_; }
  bool contains(int id) const { return index_.count(id) > 0; }
  /// Bucket index of a ranked rollout.
  int rank_of(int id) const;

  const std::vector<std::vector<int>>& buckets() const { return buckets_; }
  const std::vector<int>& bucket(std::size_t i) const { return buckets_.at(i); }
  /// Comparison partner for a bucket: its first member.
  int representative(std::size_t i) const { return buckets_.at(i).front(); }

  /// Splices a new singleton bucket before position `gap` (0..num_buckets).
  void insert_bucket(std::size_t gap, int id);
  /// Adds `id` to an existing bucket.
  void join_bucket(std::size_t bucket, int id);

  /// Internal consistency of the member index (for tests).
  bool index_consistent() const;

  std::string to_string() const;

 private:
  void reindex();
  std::vector<std::vector<int>> buckets_;
  std::map<int, int> index_;
  std::size_t max_size_;
};

/// Predicted return of each bucket: mean over its members of the mean
/// prediction across weight samples.
std::vector<double> bucket_predictions(const PreferenceChain& chain, const PredictionTable& table);

/// Bucket index nearest to `value` (lowest index on ties).
std::size_t nearest_bucket(const std::vector<double>& bucket_values, double value);

/// [lo, hi] bucket range bracketing [mean - spread, mean + spread]; lo <= hi.
std::pair<std::size_t, std::size_t> fast_guess_range(const std::vector<double>& bucket_values, double mean,
                                                     double spread);
std::pair<std::size_t, std::size_t> fast_guess_range(const PreferenceChain& chain, const PredictionTable& table,
                                                     int xi);
/// Draws m_samples weights from the net and brackets xi.
std::pair<std::size_t, std::size_t> fast_guess_range(const BayesianRewardNet& net, const FeatureStore& features,
                                                     const PreferenceChain& chain, int xi, int m_samples, Rng& gen);

struct Probe {
  std::size_t bucket = 0;
  int against = 0;  // representative queried
  PreferenceLabel label = PreferenceLabel::Equal;  // label of (xi, against)
};

struct InsertionReceipt {
  int rank = 0;
  bool merged = false;
  int queries_used = 0;
  std::size_t guess_lo = 0;
  std::size_t guess_hi = 0;
  std::vector<Probe> probes;
  std::vector<PreferencePair> queried_pairs;
  std::vector<PreferencePair> derived_pairs;
};

/// Ground-truth return lookup used to answer oracle queries.
using ReturnLookup = std::function<double(int)>;

/// Worst-case oracle queries for one insertion into a chain with `buckets` buckets.
int insertion_query_bound(std::size_t buckets);

/// Inserts xi. Probes the fast-guess bounds, gallops outward when the true
/// position lies outside them, then binary-searches. Every probe lies strictly
/// inside the still-open interval, so answers can never contradict each other.
/// Throws ChainFull when the chain is at its rollout cap.
InsertionReceipt insert(PreferenceChain& chain, int xi, Oracle& oracle, const ReturnLookup& returns,
                        std::pair<std::size_t, std::size_t> guess);
InsertionReceipt insert(PreferenceChain& chain, int xi, Oracle& oracle, const ReturnLookup& returns,
                        const PredictionTable& table);

/// Pairs implied by xi's bucket: strict against every other bucket's members,
/// Equal against co-members. Pairs already in `existing` are skipped.
std::vector<PreferencePair> derive_preferences(const PreferenceChain& chain, int xi, int rank,
                                               const PreferenceSet* existing = nullptr);

struct ConsistencyReport {
  int order_violations = 0;  // adjacent buckets not strictly decreasing
  int bucket_violations = 0;  // unequal returns inside a bucket
  int violations() const { return order_violations + bucket_violations; }
};

ConsistencyReport chain_consistency_check(const PreferenceChain& chain, const ReturnLookup& returns,
                                          double equality_tolerance = 0.0);

}  // namespace impec
