// Mean-field Gaussian reward network r(o, a) trained from preference labels.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "impec/env.hpp"
#include "impec/oracle.hpp"
#include "impec/policy_eval.hpp"
#include "impec/rollouts.hpp"

namespace impec {

enum class Provenance { Initial, Queried, Derived };
std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& text);

struct PreferencePair {
  int first = 0;
  int second = 0;
  PreferenceLabel label = PreferenceLabel::Equal;
  Provenance provenance = Provenance::Initial;

  bool operator==(const PreferencePair&) const = default;
};

/// Labeled pairs with at most one entry per unordered rollout pair.
class PreferenceSet {
 public:
  /// False (and no change) when the unordered pair is already present.
  bool add(const PreferencePair& pair);
  bool contains(int a, int b) const;
  const std::vector<PreferencePair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }

 private:
  std::vector<PreferencePair> pairs_;
  std::set<std::pair<int, int>> keys_;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 3e-5;
  int batch_size = 32;
  double temperature = 0.1;
  int epochs = 20;
  int m_samples = 10;
  double kl_weight = 1.0;
  double prior_sigma = 1.0;
  double init_sigma = 0.05;
  std::vector<int> hidden = {64, 64};

  void validate() const;
};

using WeightSample = Eigen::VectorXd;

/// Fully connected tanh network with a scalar output; parameters are stored
/// flat, layer by layer, each layer as a column-major weight matrix then bias.
struct MlpShape {
  std::vector<int> widths;  // input, hidden..., 1

  explicit MlpShape(std::vector<int> w);
  std::size_t num_params() const;
  /// Outputs for each column of `inputs` (input_dim x T).
  Eigen::RowVectorXd forward(const WeightSample& theta, const Eigen::MatrixXd& inputs) const;
  int input_dim() const { return widths.front(); }
};

class BayesianRewardNet {
 public:
  /// widths = {input, hidden..., 1}. Throws when the output width is not 1 or
  /// there is no hidden layer.
  BayesianRewardNet(std::vector<int> widths, double prior_sigma, double init_sigma, std::uint64_t seed);
  BayesianRewardNet(std::vector<int> widths, double prior_sigma, Eigen::VectorXd mu, Eigen::VectorXd rho);

  const MlpShape& shape() const { return shape_; }
  std::size_t num_params() const { return shape_.num_params(); }
  double prior_sigma() const { return prior_sigma_; }

  Eigen::VectorXd mu;
  Eigen::VectorXd rho;

  Eigen::VectorXd sigma() const;
  /// theta = mu + softplus(rho) * eps with eps ~ N(0, I).
  WeightSample sample(Rng& gen) const;
  WeightSample sample_with_noise(const Eigen::VectorXd& eps) const;
  const WeightSample& posterior_mean() const { return mu; }
  /// KL(posterior || N(0, prior_sigma^2 I)).
  double kl() const;

 private:
  MlpShape shape_;
  double prior_sigma_;
};

double softplus(double x);
double sigmoid(double x);
double inverse_softplus(double y);

/// Observation values followed by a one-hot action.
Eigen::VectorXd step_features(const Observation& obs, Action action);
/// input_dim x fragment_length matrix of a rollout.
Eigen::MatrixXd rollout_features(const Rollout& rollout);
using FeatureStore = std::vector<Eigen::MatrixXd>;  // indexed by rollout id
FeatureStore build_features(const RolloutDataset& dataset);
int feature_dim(const Environment& env);

/// Sum over steps of the network output.
double predict_return(const MlpShape& shape, const WeightSample& theta, const Eigen::MatrixXd& features);

/// Cross-entropy of one pair under P[first > second] = sigmoid((R1 - R2) / temperature).
double pair_cross_entropy(double return1, double return2, PreferenceLabel label, double temperature);
/// Probability assigned to "first preferred" by the tempered Luce rule.
double predicted_preference(double return1, double return2, double temperature);

struct LossGradient {
  double loss = 0.0;
  double data_loss = 0.0;  // mean cross-entropy
  Eigen::VectorXd grad_mu;
  Eigen::VectorXd grad_rho;
};

/// Loss and exact gradient for one batch with the reparameterisation noise
/// fixed to `eps`. loss = mean CE + kl_weight * KL / dataset_size.
LossGradient loss_and_gradient(const BayesianRewardNet& net, const std::vector<PreferencePair>& batch,
                               const FeatureStore& features, const TrainConfig& config, std::size_t dataset_size,
                               const Eigen::VectorXd& eps);

/// Same loss with a fresh noise draw.
double preference_loss(const BayesianRewardNet& net, const std::vector<PreferencePair>& batch,
                       const FeatureStore& features, const TrainConfig& config, std::size_t dataset_size, Rng& gen);

struct AdamState {
  Eigen::VectorXd m_mu, v_mu, m_rho, v_rho;
  long step = 0;
};

/// One shuffled pass of minibatch Adam with decoupled weight decay on mu.
/// Returns the mean batch loss. Throws on an empty dataset.
double train_epoch(BayesianRewardNet& net, AdamState& adam, const std::vector<PreferencePair>& pairs,
                   const FeatureStore& features, const TrainConfig& config, Rng& gen);

struct ReturnStats {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Mean and sample standard deviation of the return over m weight samples.
ReturnStats predictive_return_stats(const BayesianRewardNet& net, const Eigen::MatrixXd& features, int m_samples,
                                    Rng& gen);

/// Returns of every rollout under M shared weight samples (M x N).
struct PredictionTable {
  Eigen::MatrixXd returns;

  int samples() const { return static_cast<int>(returns.rows()); }
  double at(int sample, int id) const { return returns(sample, id); }
  double mean(int id) const;
  double stddev(int id) const;  // sample standard deviation across weight samples
};

PredictionTable predict_table(const BayesianRewardNet& net, const FeatureStore& features, int m_samples, Rng& gen);
/// Table with explicit weight samples (one row each).
PredictionTable predict_table(const MlpShape& shape, const std::vector<WeightSample>& thetas,
                              const FeatureStore& features);

/// Fraction of strict pairs whose predicted order (posterior mean) matches the label.
double preference_accuracy(const BayesianRewardNet& net, const std::vector<PreferencePair>& pairs,
                           const FeatureStore& features);

void save_checkpoint(const BayesianRewardNet& net, std::ostream& out);
void save_checkpoint(const BayesianRewardNet& net, const std::string& path);
BayesianRewardNet load_checkpoint(std::istream& in);
BayesianRewardNet load_checkpoint(const std::string& path);

/// Planner reward: network output at the posterior mean on (observation, action).
/// DynamicObstacles states are averaged over a few obstacle placements.
RewardTableFn learned_reward_table(const Environment& env, const BayesianRewardNet& net, int obstacle_samples = 4);
StateRewardFn learned_reward_fn(const BayesianRewardNet& net);

}  // namespace impec
