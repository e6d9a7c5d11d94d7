#include "impec/chain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace impec {

int PreferenceChain::rank_of(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("rollout " + std::to_string(id) + " is not ranked");
  return it->second;
}

void PreferenceChain::reindex() {
  index_.clear();
  for (std::size_t b = 0; b < buckets_.size(); ++b)
    for (int id : buckets_[b]) index_[id] = static_cast<int>(b);
}

void PreferenceChain::insert_bucket(std::size_t gap, int id) {
  if (contains(id)) throw std::invalid_argument("rollout " + std::to_string(id) + " is already ranked");
  if (full()) throw ChainFull("preference chain is full");
  if (gap > buckets_.size()) throw std::out_of_range("gap index out of range");
  buckets_.insert(buckets_.begin() + static_cast<std::ptrdiff_t>(gap), std::vector<int>{id});
  reindex();
}

void PreferenceChain::join_bucket(std::size_t bucket, int id) {
  if (contains(id)) throw std::invalid_argument("rollout " + std::to_string(id) + " is already ranked");
  if (full()) throw ChainFull("preference chain is full");
  buckets_.at(bucket).push_back(id);
  index_[id] = static_cast<int>(bucket);
}

bool PreferenceChain::index_consistent() const {
  std::size_t count = 0;
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    if (buckets_[b].empty()) return false;
    for (int id : buckets_[b]) {
      auto it = index_.find(id);
      if (it == index_.end() || it->second != static_cast<int>(b)) return false;
      ++count;
    }
  }
  return count == index_.size();
}

std::string PreferenceChain::to_string() const {
  std::ostringstream out;
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    if (b) out << " > ";
    out << '{';
    for (std::size_t i = 0; i < buckets_[b].size(); ++i) out << (i ? "," : "") << buckets_[b][i];
    out << '}';
  }
  return out.str();
}

std::vector<double> bucket_predictions(const PreferenceChain& chain, const PredictionTable& table) {
  std::vector<double> out;
  for (const auto& b : chain.buckets()) {
    double s = 0.0;
    for (int id : b) s += table.mean(id);
    out.push_back(s / static_cast<double>(b.size()));
  }
  return out;
}

std::size_t nearest_bucket(const std::vector<double>& values, double value) {
  if (values.empty()) throw std::invalid_argument("no buckets");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (std::abs(values[i] - value) < std::abs(values[best] - value)) best = i;
  return best;
}

std::pair<std::size_t, std::size_t> fast_guess_range(const std::vector<double>& values, double mean, double spread) {
  // higher predicted return sits nearer the head of the chain
  std::size_t lo = nearest_bucket(values, mean + spread);
  std::size_t hi = nearest_bucket(values, mean - spread);
  if (lo > hi) std::swap(lo, hi);
  return {lo, hi};
}

std::pair<std::size_t, std::size_t> fast_guess_range(const PreferenceChain& chain, const PredictionTable& table,
                                                     int xi) {
  if (chain.empty()) throw std::invalid_argument("fast guess needs a non-empty chain");
  return fast_guess_range(bucket_predictions(chain, table), table.mean(xi), table.stddev(xi));
}

std::pair<std::size_t, std::size_t> fast_guess_range(const BayesianRewardNet& net, const FeatureStore& features,
                                                     const PreferenceChain& chain, int xi, int m_samples, Rng& gen) {
  return fast_guess_range(chain, predict_table(net, features, m_samples, gen), xi);
}

int insertion_query_bound(std::size_t buckets) {
  const int l = static_cast<int>(std::ceil(std::log2(static_cast<double>(buckets) + 1.0)));
  return 2 + l + 2 * l;
}

InsertionReceipt insert(PreferenceChain& chain, int xi, Oracle& oracle, const ReturnLookup& returns,
                        std::pair<std::size_t, std::size_t> guess) {
  if (chain.contains(xi)) throw std::invalid_argument("rollout " + std::to_string(xi) + " is already ranked");
  if (chain.full()) throw ChainFull("preference chain is full");
  InsertionReceipt receipt;
  if (chain.empty()) {
    chain.insert_bucket(0, xi);
    return receipt;
  }
  const int n = static_cast<int>(chain.num_buckets());
  auto [lo, hi] = guess;
  if (lo > hi) std::swap(lo, hi);
  lo = std::min<std::size_t>(lo, static_cast<std::size_t>(n - 1));
  hi = std::min<std::size_t>(hi, static_cast<std::size_t>(n - 1));
  receipt.guess_lo = lo;
  receipt.guess_hi = hi;

  const double r_xi = returns(xi);
  // open interval: buckets <= better are preferred to xi, buckets >= worse are beaten by xi
  int better = -1, worse = n;
  int merged_into = -1;
  auto probe = [&](int b) {
    const int rep = chain.representative(static_cast<std::size_t>(b));
    const PreferenceLabel label = oracle.compare(r_xi, returns(rep));
    ++receipt.queries_used;
    receipt.probes.push_back({static_cast<std::size_t>(b), rep, label});
    receipt.queried_pairs.push_back({xi, rep, label, Provenance::Queried});
    if (label == PreferenceLabel::Equal) merged_into = b;
    else if (label == PreferenceLabel::SecondPreferred) better = b;
    else worse = b;
  };
  auto open = [&](int b) { return b > better && b < worse && merged_into < 0; };

  probe(static_cast<int>(lo));
  if (open(static_cast<int>(hi))) probe(static_cast<int>(hi));
  // gallop toward the side the answers point to
  for (int step = 1; merged_into < 0 && worse == n && better < n - 1; step *= 2) {
    probe(std::min(better + step, n - 1));
  }
  for (int step = 1; merged_into < 0 && better == -1 && worse > 0; step *= 2) {
    probe(std::max(worse - step, 0));
  }
  while (merged_into < 0 && worse - better > 1) probe(better + (worse - better) / 2);

  if (merged_into >= 0) {
    chain.join_bucket(static_cast<std::size_t>(merged_into), xi);
    receipt.rank = merged_into;
    receipt.merged = true;
  } else {
    chain.insert_bucket(static_cast<std::size_t>(worse), xi);
    receipt.rank = worse;
  }
  receipt.derived_pairs = derive_preferences(chain, xi, receipt.rank);
  return receipt;
}

InsertionReceipt insert(PreferenceChain& chain, int xi, Oracle& oracle, const ReturnLookup& returns,
                        const PredictionTable& table) {
  if (chain.empty()) return insert(chain, xi, oracle, returns, std::pair<std::size_t, std::size_t>{0, 0});
  return insert(chain, xi, oracle, returns, fast_guess_range(chain, table, xi));
}

std::vector<PreferencePair> derive_preferences(const PreferenceChain& chain, int xi, int rank,
                                               const PreferenceSet* existing) {
  std::vector<PreferencePair> out;
  const auto& buckets = chain.buckets();
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    for (int other : buckets[b]) {
      if (other == xi) continue;
      if (existing && existing->contains(xi, other)) continue;
      if (static_cast<int>(b) < rank) out.push_back({other, xi, PreferenceLabel::FirstPreferred, Provenance::Derived});
      else if (static_cast<int>(b) > rank) out.push_back({xi, other, PreferenceLabel::FirstPreferred, Provenance::Derived});
      else out.push_back({xi, other, PreferenceLabel::Equal, Provenance::Derived});
    }
  }
  return out;
}

ConsistencyReport chain_consistency_check(const PreferenceChain& chain, const ReturnLookup& returns,
                                          double tolerance) {
  ConsistencyReport report;
  const auto& buckets = chain.buckets();
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    const double r0 = returns(buckets[b].front());
    for (int id : buckets[b])
      if (std::abs(returns(id) - r0) > tolerance) ++report.bucket_violations;
    if (b + 1 < buckets.size()) {
      double worst_here = r0, best_next = returns(buckets[b + 1].front());
      for (int id : buckets[b]) worst_here = std::min(worst_here, returns(id));
      for (int id : buckets[b + 1]) best_next = std::max(best_next, returns(id));
      if (!(worst_here > best_next + tolerance)) ++report.order_violations;
    }
  }
  return report;
}

}  // namespace impec
