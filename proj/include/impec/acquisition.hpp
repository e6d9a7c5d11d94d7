// Information-gain acquisition over rank outcomes, plus baseline scores.
#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "impec/chain.hpp"
#include "impec/reward_model.hpp"

namespace impec {

/// Probabilities over the n + 1 gaps of an n-bucket chain (gap i sits just
/// above bucket i; gap n is below the last bucket).
struct RankDistribution {
  std::vector<double> probs;
};

/// Gap weights are P(b_{i-1} > xi) * P(xi > b_i) under the tempered Luce rule
/// on predicted returns; boundary gaps keep the single factor that exists.
RankDistribution rank_distribution(const std::vector<double>& bucket_returns, double xi_return, double temperature);

/// Per-sample bucket returns: mean over members of the sample's predicted return.
std::vector<double> bucket_returns_for_sample(const PreferenceChain& chain, const PredictionTable& table, int sample);

/// Monte-Carlo mutual information estimator. Row i of `probs` is the outcome
/// distribution under weight sample i:
///   (1/M) sum_i sum_k P_ik log(M P_ik / sum_j P_jk),  0 log 0 = 0.
double information_gain_estimate(const Eigen::MatrixXd& probs);

/// Estimator applied to xi's rank distribution under every sample of `table`.
double info_gain(const PreferenceChain& chain, const PredictionTable& table, int xi, double temperature);
/// Draws m_samples fresh weights from the net.
double info_gain(const BayesianRewardNet& net, const FeatureStore& features, const PreferenceChain& chain, int xi,
                 int m_samples, double temperature, Rng& gen);

struct AcquisitionResult {
  int chosen = -1;
  std::map<int, double> scores;
};

/// Scores every candidate against the same weight samples; ties go to the
/// lowest id. Throws on an empty candidate list.
AcquisitionResult select_next(const PreferenceChain& chain, const PredictionTable& table,
                              const std::vector<int>& candidates, double temperature);

/// Pairwise baselines on the binary outcome of (a, b).
double pairwise_infogain_score(const PredictionTable& table, int a, int b, double temperature);
double volume_removal_score(const PredictionTable& table, int a, int b, double temperature);

int random_select(const std::vector<int>& candidates, Rng& gen);

}  // namespace impec
