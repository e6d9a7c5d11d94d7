#include "impec/acquisition.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace impec {

namespace {

// log P(a > b) for the tempered Luce rule, stable for any gap.
double log_prefer(double ra, double rb, double temperature) { return -softplus(-(ra - rb) / temperature); }

}  // namespace

RankDistribution rank_distribution(const std::vector<double>& bucket_returns, double xi_return, double temperature) {
  if (bucket_returns.empty()) throw std::invalid_argument("rank distribution needs at least one bucket");
  if (!(temperature > 0)) throw std::invalid_argument("temperature must be positive");
  const std::size_t n = bucket_returns.size();
  std::vector<double> logw(n + 1, 0.0);
  for (std::size_t i = 0; i <= n; ++i) {
    if (i > 0) logw[i] += log_prefer(bucket_returns[i - 1], xi_return, temperature);
    if (i < n) logw[i] += log_prefer(xi_return, bucket_returns[i], temperature);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  RankDistribution out;
  out.probs.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) total += out.probs[i] = std::exp(logw[i] - top);
  for (double& p : out.probs) p /= total;
  return out;
}

std::vector<double> bucket_returns_for_sample(const PreferenceChain& chain, const PredictionTable& table, int sample) {
  std::vector<double> out;
  for (const auto& b : chain.buckets()) {
    double s = 0.0;
    for (int id : b) s += table.at(sample, id);
    out.push_back(s / static_cast<double>(b.size()));
  }
  return out;
}

double information_gain_estimate(const Eigen::MatrixXd& probs) {
  const auto m = probs.rows();
  if (m < 1) throw std::invalid_argument("need at least one weight sample");
  const Eigen::RowVectorXd column_sum = probs.colwise().sum();
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double p = probs(i, k);
      if (p > 0.0) total += p * std::log(static_cast<double>(m) * p / column_sum[k]);
    }
  return total / static_cast<double>(m);
}

double info_gain(const PreferenceChain& chain, const PredictionTable& table, int xi, double temperature) {
  if (chain.empty()) throw std::invalid_argument("info gain needs a non-empty chain");
  const int m = table.samples();
  Eigen::MatrixXd probs(m, static_cast<Eigen::Index>(chain.num_buckets() + 1));
  for (int i = 0; i < m; ++i) {
    const auto d = rank_distribution(bucket_returns_for_sample(chain, table, i), table.at(i, xi), temperature);
    for (std::size_t k = 0; k < d.probs.size(); ++k) probs(i, static_cast<Eigen::Index>(k)) = d.probs[k];
  }
  return information_gain_estimate(probs);
}

double info_gain(const BayesianRewardNet& net, const FeatureStore& features, const PreferenceChain& chain, int xi,
                 int m_samples, double temperature, Rng& gen) {
  if (m_samples < 2) throw std::invalid_argument("m_samples must be at least 2");
  return info_gain(chain, predict_table(net, features, m_samples, gen), xi, temperature);
}

AcquisitionResult select_next(const PreferenceChain& chain, const PredictionTable& table,
                              const std::vector<int>& candidates, double temperature) {
  if (candidates.empty()) throw std::invalid_argument("no candidates to choose from");
  AcquisitionResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (int id : candidates) {
    if (chain.contains(id)) throw std::invalid_argument("candidate " + std::to_string(id) + " is already ranked");
    result.scores[id] = chain.empty() ? 0.0 : info_gain(chain, table, id, temperature);
  }
  for (const auto& [id, score] : result.scores)
    if (score > best) {
      best = score;
      result.chosen = id;
    }
  return result;
}

double pairwise_infogain_score(const PredictionTable& table, int a, int b, double temperature) {
  const int m = table.samples();
  Eigen::MatrixXd probs(m, 2);
  for (int i = 0; i < m; ++i) {
    probs(i, 0) = std::exp(log_prefer(table.at(i, a), table.at(i, b), temperature));
    probs(i, 1) = std::exp(log_prefer(table.at(i, b), table.at(i, a), temperature));
  }
  return information_gain_estimate(probs);
}

double volume_removal_score(const PredictionTable& table, int a, int b, double temperature) {
  const int m = table.samples();
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    const double p = std::exp(log_prefer(table.at(i, a), table.at(i, b), temperature));
    const double q = std::exp(log_prefer(table.at(i, b), table.at(i, a), temperature));
    total += p * (1.0 - p) + q * (1.0 - q);
  }
  return total / m;
}

int random_select(const std::vector<int>& candidates, Rng& gen) {
  if (candidates.empty()) throw std::invalid_argument("no candidates to choose from");
  return candidates[uniform_index(gen, candidates.size())];
}

}  // namespace impec
