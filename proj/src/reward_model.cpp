#include "impec/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace impec {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Initial: return "initial";
    case Provenance::Queried: return "queried";
    case Provenance::Derived: return "derived";
  }
  return "?";
}

Provenance parse_provenance(const std::string& text) {
  if (text == "initial") return Provenance::Initial;
  if (text == "queried") return Provenance::Queried;
  if (text == "derived") return Provenance::Derived;
  throw std::invalid_argument("unknown provenance '" + text + "'");
}

bool PreferenceSet::add(const PreferencePair& p) {
  if (p.first == p.second) throw std::invalid_argument("a preference pair needs two distinct rollouts");
  if (!keys_.insert({std::min(p.first, p.second), std::max(p.first, p.second)}).second) return false;
  pairs_.push_back(p);
  return true;
}

bool PreferenceSet::contains(int a, int b) const { return keys_.count({std::min(a, b), std::max(a, b)}) > 0; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !(weight_decay >= 0) || batch_size <= 0 || !(temperature > 0) || epochs <= 0 ||
      m_samples < 2 || !(kl_weight >= 0) || !(prior_sigma > 0) || !(init_sigma > 0))
    throw ConfigError("training hyperparameters must be positive (m_samples >= 2)");
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  for (int h : hidden)
    if (h <= 0) throw ConfigError("hidden widths must be positive");
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) { return y > 30 ? y : std::log(std::expm1(y)); }

MlpShape::MlpShape(std::vector<int> w) : widths(std::move(w)) {
  if (widths.size() < 3) throw std::invalid_argument("network needs an input, at least one hidden layer and an output");
  if (widths.back() != 1) throw std::invalid_argument("reward network output width must be 1");
  for (int x : widths)
    if (x <= 0) throw std::invalid_argument("layer widths must be positive");
}

std::size_t MlpShape::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    n += static_cast<std::size_t>(widths[l + 1]) * static_cast<std::size_t>(widths[l] + 1);
  return n;
}

namespace {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

struct LayerView {
  std::size_t w_offset, b_offset;
  int in, out;
};

std::vector<LayerView> layer_views(const MlpShape& shape) {
  std::vector<LayerView> views;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < shape.widths.size(); ++l) {
    const int in = shape.widths[l], out = shape.widths[l + 1];
    views.push_back({off, off + static_cast<std::size_t>(in) * out, in, out});
    off += static_cast<std::size_t>(in + 1) * out;
  }
  return views;
}

// Forward pass keeping every layer's activation (inputs included).
std::vector<Eigen::MatrixXd> forward_all(const MlpShape& shape, const WeightSample& theta, const Eigen::MatrixXd& x) {
  if (x.rows() != shape.input_dim())
    throw std::invalid_argument("feature dimension " + std::to_string(x.rows()) + " does not match network input " +
                                std::to_string(shape.input_dim()));
  if (static_cast<std::size_t>(theta.size()) != shape.num_params())
    throw std::invalid_argument("weight sample has the wrong size");
  const auto views = layer_views(shape);
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(views.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < views.size(); ++l) {
    const auto& v = views[l];
    ConstMatMap w(theta.data() + v.w_offset, v.out, v.in);
    ConstVecMap b(theta.data() + v.b_offset, v.out);
    Eigen::MatrixXd z = w * acts.back();
    z.colwise() += b;
    if (l + 1 < views.size()) z = z.array().tanh().matrix();
    acts.push_back(std::move(z));
  }
  return acts;
}

Eigen::MatrixXd concat_columns(const FeatureStore& features, const std::vector<int>& ids, std::vector<int>& offsets) {
  Eigen::Index cols = 0, rows = -1;
  offsets.clear();
  for (int id : ids) {
    const auto& f = features.at(static_cast<std::size_t>(id));
    if (rows >= 0 && f.rows() != rows) throw std::invalid_argument("rollout feature dimensions differ");
    rows = f.rows();
    offsets.push_back(static_cast<int>(cols));
    cols += f.cols();
  }
  offsets.push_back(static_cast<int>(cols));
  Eigen::MatrixXd x(std::max<Eigen::Index>(rows, 0), cols);
  for (std::size_t i = 0; i < ids.size(); ++i)
    x.middleCols(offsets[i], offsets[i + 1] - offsets[i]) = features[static_cast<std::size_t>(ids[i])];
  return x;
}

double label_target(PreferenceLabel label) {
  switch (label) {
    case PreferenceLabel::FirstPreferred: return 1.0;
    case PreferenceLabel::SecondPreferred: return 0.0;
    default: return 0.5;
  }
}

Eigen::VectorXd standard_normal(std::size_t n, Rng& gen) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd eps(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = dist(gen);
  return eps;
}

}  // namespace

Eigen::RowVectorXd MlpShape::forward(const WeightSample& theta, const Eigen::MatrixXd& inputs) const {
  return forward_all(*this, theta, inputs).back();
}

BayesianRewardNet::BayesianRewardNet(std::vector<int> widths, double prior_sigma, double init_sigma,
                                     std::uint64_t seed)
    : shape_(std::move(widths)), prior_sigma_(prior_sigma) {
  if (!(prior_sigma > 0) || !(init_sigma > 0)) throw std::invalid_argument("sigmas must be positive");
  const std::size_t n = shape_.num_params();
  mu.resize(static_cast<Eigen::Index>(n));
  rho = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), inverse_softplus(init_sigma));
  Rng gen(seed);
  for (const auto& v : layer_views(shape_)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(v.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = v.w_offset; i < v.b_offset + static_cast<std::size_t>(v.out); ++i)
      mu[static_cast<Eigen::Index>(i)] = dist(gen);
  }
}

BayesianRewardNet::BayesianRewardNet(std::vector<int> widths, double prior_sigma, Eigen::VectorXd mu_in,
                                     Eigen::VectorXd rho_in)
    : mu(std::move(mu_in)), rho(std::move(rho_in)), shape_(std::move(widths)), prior_sigma_(prior_sigma) {
  if (!(prior_sigma > 0)) throw std::invalid_argument("prior sigma must be positive");
  if (static_cast<std::size_t>(mu.size()) != shape_.num_params() || rho.size() != mu.size())
    throw std::invalid_argument("parameter vectors do not match the layout");
}

Eigen::VectorXd BayesianRewardNet::sigma() const { return rho.unaryExpr([](double r) { return softplus(r); }); }

WeightSample BayesianRewardNet::sample(Rng& gen) const { return sample_with_noise(standard_normal(num_params(), gen)); }

WeightSample BayesianRewardNet::sample_with_noise(const Eigen::VectorXd& eps) const {
  return mu + sigma().cwiseProduct(eps);
}

double BayesianRewardNet::kl() const {
  const double s = prior_sigma_;
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double sg = softplus(rho[i]);
    total += std::log(s / sg) + (sg * sg + mu[i] * mu[i]) / (2 * s * s) - 0.5;
  }
  return total;
}

Eigen::VectorXd step_features(const Observation& obs, Action action) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obs.values.size()) + kNumActions);
  for (std::size_t i = 0; i < obs.values.size(); ++i) f[static_cast<Eigen::Index>(i)] = obs.values[i];
  f[static_cast<Eigen::Index>(obs.values.size()) + static_cast<int>(action)] = 1.0;
  return f;
}

Eigen::MatrixXd rollout_features(const Rollout& rollout) {
  if (rollout.steps.empty()) return {};
  const auto dim = static_cast<Eigen::Index>(rollout.steps.front().observation.values.size()) + kNumActions;
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(rollout.steps.size()));
  for (std::size_t t = 0; t < rollout.steps.size(); ++t)
    x.col(static_cast<Eigen::Index>(t)) = step_features(rollout.steps[t].observation, rollout.steps[t].action);
  return x;
}

FeatureStore build_features(const RolloutDataset& dataset) {
  FeatureStore store;
  store.reserve(dataset.size());
  for (const auto& r : dataset.rollouts) store.push_back(rollout_features(r));
  return store;
}

int feature_dim(const Environment& env) { return env.observation_size() + kNumActions; }

double predict_return(const MlpShape& shape, const WeightSample& theta, const Eigen::MatrixXd& features) {
  return shape.forward(theta, features).sum();
}

double predicted_preference(double r1, double r2, double temperature) { return sigmoid((r1 - r2) / temperature); }

double pair_cross_entropy(double r1, double r2, PreferenceLabel label, double temperature) {
  const double z = (r1 - r2) / temperature;
  return softplus(z) - label_target(label) * z;
}

LossGradient loss_and_gradient(const BayesianRewardNet& net, const std::vector<PreferencePair>& batch,
                               const FeatureStore& features, const TrainConfig& config, std::size_t dataset_size,
                               const Eigen::VectorXd& eps) {
  if (batch.empty()) throw std::invalid_argument("empty preference batch");
  if (dataset_size == 0) throw std::invalid_argument("dataset size must be positive");
  const MlpShape& shape = net.shape();
  const Eigen::VectorXd sig = net.sigma();
  const WeightSample theta = net.mu + sig.cwiseProduct(eps);

  std::vector<int> ids;
  for (const auto& p : batch) {
    ids.push_back(p.first);
    ids.push_back(p.second);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::map<int, std::size_t> slot;
  for (std::size_t i = 0; i < ids.size(); ++i) slot[ids[i]] = i;

  std::vector<int> offsets;
  const Eigen::MatrixXd x = concat_columns(features, ids, offsets);
  const auto acts = forward_all(shape, theta, x);
  const Eigen::RowVectorXd& out = acts.back();
  std::vector<double> returns(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    returns[i] = out.segment(offsets[i], offsets[i + 1] - offsets[i]).sum();

  LossGradient lg;
  std::vector<double> upstream(ids.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : batch) {
    const double r1 = returns[slot[p.first]], r2 = returns[slot[p.second]];
    const double z = (r1 - r2) / config.temperature;
    const double y = label_target(p.label);
    lg.data_loss += (softplus(z) - y * z) * scale;
    const double dz = (sigmoid(z) - y) * scale / config.temperature;
    upstream[slot[p.first]] += dz;
    upstream[slot[p.second]] -= dz;
  }

  Eigen::RowVectorXd delta(out.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    delta.segment(offsets[i], offsets[i + 1] - offsets[i]).setConstant(upstream[i]);

  Eigen::VectorXd grad_theta = Eigen::VectorXd::Zero(theta.size());
  const auto views = layer_views(shape);
  Eigen::MatrixXd d = delta;
  for (std::size_t l = views.size(); l-- > 0;) {
    const auto& v = views[l];
    const Eigen::MatrixXd& h = acts[l];
    Eigen::Map<Eigen::MatrixXd>(grad_theta.data() + v.w_offset, v.out, v.in) = d * h.transpose();
    Eigen::Map<Eigen::VectorXd>(grad_theta.data() + v.b_offset, v.out) = d.rowwise().sum();
    if (l > 0) {
      ConstMatMap w(theta.data() + v.w_offset, v.out, v.in);
      Eigen::MatrixXd dh = w.transpose() * d;
      d = dh.array() * (1.0 - h.array().square());
    }
  }

  const double s2 = net.prior_sigma() * net.prior_sigma();
  const double kl_scale = config.kl_weight / static_cast<double>(dataset_size);
  lg.loss = lg.data_loss + kl_scale * net.kl();
  lg.grad_mu = grad_theta + kl_scale * net.mu / s2;
  lg.grad_rho.resize(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double ds_drho = sigmoid(net.rho[i]);
    const double dkl_dsigma = -1.0 / sig[i] + sig[i] / s2;
    lg.grad_rho[i] = (grad_theta[i] * eps[i] + kl_scale * dkl_dsigma) * ds_drho;
  }
  return lg;
}

double preference_loss(const BayesianRewardNet& net, const std::vector<PreferencePair>& batch,
                       const FeatureStore& features, const TrainConfig& config, std::size_t dataset_size, Rng& gen) {
  return loss_and_gradient(net, batch, features, config, dataset_size, standard_normal(net.num_params(), gen)).loss;
}

double train_epoch(BayesianRewardNet& net, AdamState& adam, const std::vector<PreferencePair>& pairs,
                   const FeatureStore& features, const TrainConfig& config, Rng& gen) {
  if (pairs.empty()) throw std::invalid_argument("cannot train on an empty preference dataset");
  const Eigen::Index n = net.mu.size();
  if (adam.m_mu.size() != n) {
    adam.m_mu = adam.v_mu = adam.m_rho = adam.v_rho = Eigen::VectorXd::Zero(n);
    adam.step = 0;
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen);
  constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  double total = 0.0;
  int batches = 0;
  std::vector<PreferencePair> batch;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
    batch.clear();
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
    for (std::size_t i = start; i < end; ++i) batch.push_back(pairs[order[i]]);
    const Eigen::VectorXd eps = standard_normal(static_cast<std::size_t>(n), gen);
    const LossGradient lg = loss_and_gradient(net, batch, features, config, pairs.size(), eps);
    total += lg.loss;
    ++batches;
    ++adam.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
    auto update = [&](Eigen::VectorXd& p, Eigen::VectorXd& m, Eigen::VectorXd& v, const Eigen::VectorXd& g) {
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g.cwiseProduct(g);
      p.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + adam_eps);
    };
    net.mu *= 1.0 - config.learning_rate * config.weight_decay;
    update(net.mu, adam.m_mu, adam.v_mu, lg.grad_mu);
    update(net.rho, adam.m_rho, adam.v_rho, lg.grad_rho);
  }
  return total / batches;
}

ReturnStats predictive_return_stats(const BayesianRewardNet& net, const Eigen::MatrixXd& features, int m_samples,
                                    Rng& gen) {
  if (m_samples < 2) throw std::invalid_argument("m_samples must be at least 2");
  std::vector<double> r;
  for (int i = 0; i < m_samples; ++i) r.push_back(predict_return(net.shape(), net.sample(gen), features));
  return {mean_of(r), stddev_of(r)};
}

double PredictionTable::mean(int id) const { return returns.col(id).mean(); }

double PredictionTable::stddev(int id) const {
  const auto m = returns.rows();
  if (m < 2) return 0.0;
  const double mu = mean(id);
  return std::sqrt((returns.col(id).array() - mu).square().sum() / static_cast<double>(m - 1));
}

PredictionTable predict_table(const MlpShape& shape, const std::vector<WeightSample>& thetas,
                              const FeatureStore& features) {
  std::vector<int> ids(features.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<int> offsets;
  const Eigen::MatrixXd x = concat_columns(features, ids, offsets);
  PredictionTable table;
  table.returns.resize(static_cast<Eigen::Index>(thetas.size()), static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const Eigen::RowVectorXd out = shape.forward(thetas[i], x);
    for (std::size_t r = 0; r < ids.size(); ++r)
      table.returns(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) =
          out.segment(offsets[r], offsets[r + 1] - offsets[r]).sum();
  }
  return table;
}

PredictionTable predict_table(const BayesianRewardNet& net, const FeatureStore& features, int m_samples, Rng& gen) {
  std::vector<WeightSample> thetas;
  for (int i = 0; i < m_samples; ++i) thetas.push_back(net.sample(gen));
  return predict_table(net.shape(), thetas, features);
}

double preference_accuracy(const BayesianRewardNet& net, const std::vector<PreferencePair>& pairs,
                           const FeatureStore& features) {
  int strict = 0, right = 0;
  for (const auto& p : pairs) {
    if (p.label == PreferenceLabel::Equal) continue;
    ++strict;
    const double r1 = predict_return(net.shape(), net.mu, features.at(static_cast<std::size_t>(p.first)));
    const double r2 = predict_return(net.shape(), net.mu, features.at(static_cast<std::size_t>(p.second)));
    if ((r1 > r2) == (p.label == PreferenceLabel::FirstPreferred)) ++right;
  }
  return strict == 0 ? 1.0 : static_cast<double>(right) / strict;
}

void save_checkpoint(const BayesianRewardNet& net, std::ostream& out) {
  out << "impec-bnn 1\nwidths";
  for (int w : net.shape().widths) out << ' ' << w;
  out << '\n' << std::hexfloat << "prior_sigma " << net.prior_sigma() << '\n';
  auto dump = [&out](const char* name, const Eigen::VectorXd& v) {
    out << name << ' ' << std::dec << v.size() << std::hexfloat;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << v[i];
    out << '\n';
  };
  dump("mu", net.mu);
  dump("rho", net.rho);
  out << std::defaultfloat;
}

void save_checkpoint(const BayesianRewardNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  save_checkpoint(net, out);
}

BayesianRewardNet load_checkpoint(std::istream& in) {
  auto read_double = [&in]() {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("truncated checkpoint");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw std::runtime_error("bad number in checkpoint: " + tok);
    return v;
  };
  std::string magic, line, word;
  int version = 0;
  if (!(in >> magic >> version) || magic != "impec-bnn" || version != 1)
    throw std::runtime_error("not an impec-bnn v1 checkpoint");
  std::getline(in, line);
  std::getline(in, line);
  std::istringstream ws(line);
  std::vector<int> widths;
  ws >> word;
  if (word != "widths") throw std::runtime_error("checkpoint is missing widths");
  for (int w; ws >> w;) widths.push_back(w);
  if (!(in >> word) || word != "prior_sigma") throw std::runtime_error("checkpoint is missing prior_sigma");
  const double prior = read_double();
  auto read_vec = [&](const char* name) {
    std::size_t n = 0;
    if (!(in >> word >> n) || word != name) throw std::runtime_error(std::string("checkpoint is missing ") + name);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = read_double();
    return v;
  };
  Eigen::VectorXd mu = read_vec("mu");
  Eigen::VectorXd rho = read_vec("rho");
  return BayesianRewardNet(widths, prior, std::move(mu), std::move(rho));
}

BayesianRewardNet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

RewardTableFn learned_reward_table(const Environment& env, const BayesianRewardNet& net, int obstacle_samples) {
  const MlpShape shape = net.shape();
  const WeightSample theta = net.posterior_mean();
  const bool dynamic = env.config().task == TaskName::DynamicObstacles;
  const int k = dynamic ? std::max(1, obstacle_samples) : 1;
  return [&env, shape, theta, k, dynamic](const TabularModel& model) {
    const Eigen::Index dim = shape.input_dim();
    const auto n = static_cast<Eigen::Index>(model.size());
    Eigen::MatrixXd x(dim, n * kNumActions * k);
    Eigen::Index col = 0;
    for (std::size_t s = 0; s < model.size(); ++s) {
      for (int j = 0; j < k; ++j) {
        GridState st = model.states[s];
        if (dynamic) {
          st.noise_state = mix_seed(s, static_cast<std::uint64_t>(j));
          env.place_obstacles(st);
        }
        const Observation obs = env.observe(st);
        for (Action a : kAllActions) x.col(col++) = step_features(obs, a);
      }
    }
    const Eigen::RowVectorXd out = shape.forward(theta, x);
    RewardTable table(model.size() * kNumActions, 0.0);
    col = 0;
    for (std::size_t s = 0; s < model.size(); ++s)
      for (int j = 0; j < k; ++j)
        for (int a = 0; a < kNumActions; ++a) table[s * kNumActions + a] += out[col++] / k;
    return table;
  };
}

StateRewardFn learned_reward_fn(const BayesianRewardNet& net) {
  const MlpShape shape = net.shape();
  const WeightSample theta = net.posterior_mean();
  return [shape, theta](const GridState&, const Observation& obs, Action a) {
    return shape.forward(theta, step_features(obs, a)).sum();
  };
}

}  // namespace impec
