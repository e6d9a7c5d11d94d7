// Brute-force reference computations shared by the unit and acceptance tests.
#pragma once

#include <set>
#include <vector>

#include <Eigen/Dense>

#include "impec/dataset_graph.hpp"
#include "impec/reward_model.hpp"

namespace oracles {

/// Largest relative error between loss_and_gradient and central differences of
/// its loss, over every mu and rho entry. Denominator floor 1e-6.
double gradient_check(const impec::BayesianRewardNet& net, const std::vector<impec::PreferencePair>& batch,
                      const impec::FeatureStore& features, const impec::TrainConfig& config,
                      std::size_t dataset_size, const Eigen::VectorXd& eps, double h = 1e-6);

/// Random features and labeled pairs for a small net.
struct PreferenceFixture {
  impec::FeatureStore features;
  std::vector<impec::PreferencePair> pairs;
};
PreferenceFixture random_preference_fixture(int input_dim, int rollouts, int steps, int pairs, impec::Rng& gen);

/// I(theta; psi) for theta uniform over the rows of `probs`, summed over the
/// joint table as p(i,k) log(p(i,k) / (p(i) p(k))).
double mutual_information(const Eigen::MatrixXd& probs);

/// Row-stochastic random matrix; `sparsity` is the chance of an exact zero.
Eigen::MatrixXd random_stochastic_rows(int rows, int cols, double sparsity, impec::Rng& gen);

double clustering_by_triples(const impec::PreferenceGraph& g);
std::set<int> largest_component_by_union_find(const impec::PreferenceGraph& g);
double efficiency_by_floyd_warshall(const impec::PreferenceGraph& g);
/// Ordered reachable pairs in the strict orientation (Warshall closure).
long long closure_pairs_by_warshall(const impec::PreferenceGraph& g);

/// G(n, p) with random labels; `acyclic` orients strict edges from lower to higher id.
impec::PreferenceGraph random_graph(int n, double p, bool acyclic, impec::Rng& gen);

}  // namespace oracles
