#include "autocost/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include <Eigen/QR>

#include "autocost/errors.hpp"
#include "json.hpp"

namespace autocost::nn {

namespace {

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Identity:
      break;
    case Activation::Tanh: {
      // Through the vectorized exp; libm tanh dominated training time.
      const Eigen::ArrayXXd t = (-2.0 * z.array().abs()).exp();
      z = ((1.0 - t) / (1.0 + t) * z.array().sign()).matrix();
      break;
    }
    case Activation::Sigmoid:
      z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
      break;
  }
}

// Derivative expressed through the activation output y.
Eigen::ArrayXXd activation_slope(Activation a, const Eigen::MatrixXd& y) {
  switch (a) {
    case Activation::Identity:
      return Eigen::ArrayXXd::Ones(y.rows(), y.cols());
    case Activation::Tanh:
      return 1.0 - y.array().square();
    case Activation::Sigmoid:
      return y.array() * (1.0 - y.array());
  }
  return {};
}

Activation layer_activation(const Architecture& arch, int layer) {
  return layer == arch.num_layers() - 1 ? arch.output_activation
                                        : arch.hidden_activation;
}

void check_cache(const MlpParams& params, const ForwardCache& cache) {
  if (static_cast<int>(cache.activations.size()) !=
      params.architecture.num_layers() + 1)
    throw ContractError("forward cache does not match architecture");
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity:
      return "Identity";
    case Activation::Tanh:
      return "Tanh";
    case Activation::Sigmoid:
      return "Sigmoid";
  }
  return "?";
}

Activation parse_activation(const std::string& text) {
  if (text == "Identity") return Activation::Identity;
  if (text == "Tanh") return Activation::Tanh;
  if (text == "Sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + text + "'");
}

void Architecture::validate() const {
  if (layer_sizes.size() < 2)
    throw ContractError("architecture needs at least input and output layers");
  for (int n : layer_sizes) {
    if (n <= 0) throw ContractError("layer sizes must be positive");
  }
}

int Architecture::parameter_count() const {
  int total = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i)
    total += (layer_sizes[i] + 1) * layer_sizes[i + 1];
  return total;
}

MlpParams::MlpParams(Architecture arch, Eigen::VectorXd flat)
    : architecture(std::move(arch)), values(std::move(flat)) {
  architecture.validate();
  if (values.size() != architecture.parameter_count())
    throw ContractError("parameter vector length " +
                        std::to_string(values.size()) + " != " +
                        std::to_string(architecture.parameter_count()));
}

MlpParams MlpParams::zeros(Architecture arch) {
  arch.validate();
  const int n = arch.parameter_count();
  return MlpParams(std::move(arch), Eigen::VectorXd::Zero(n));
}

int MlpParams::offset(int layer) const {
  int off = 0;
  for (int l = 0; l < layer; ++l)
    off += (architecture.layer_sizes[l] + 1) * architecture.layer_sizes[l + 1];
  return off;
}

Eigen::Map<const RowMatrix> MlpParams::weight(int layer) const {
  const int n_in = architecture.layer_sizes[layer];
  const int n_out = architecture.layer_sizes[layer + 1];
  return Eigen::Map<const RowMatrix>(values.data() + offset(layer), n_out,
                                     n_in);
}

Eigen::Map<const Eigen::VectorXd> MlpParams::bias(int layer) const {
  const int n_in = architecture.layer_sizes[layer];
  const int n_out = architecture.layer_sizes[layer + 1];
  return Eigen::Map<const Eigen::VectorXd>(
      values.data() + offset(layer) + n_in * n_out, n_out);
}

std::vector<Layer> MlpParams::unflatten() const {
  std::vector<Layer> layers;
  for (int l = 0; l < architecture.num_layers(); ++l)
    layers.push_back({Eigen::MatrixXd(weight(l)), Eigen::VectorXd(bias(l))});
  return layers;
}

MlpParams MlpParams::flatten(Architecture arch,
                             const std::vector<Layer>& layers) {
  MlpParams out = zeros(std::move(arch));
  if (static_cast<int>(layers.size()) != out.architecture.num_layers())
    throw ContractError("layer count does not match architecture");
  for (int l = 0; l < out.architecture.num_layers(); ++l) {
    const int n_in = out.architecture.layer_sizes[l];
    const int n_out = out.architecture.layer_sizes[l + 1];
    if (layers[l].weight.rows() != n_out || layers[l].weight.cols() != n_in ||
        layers[l].bias.size() != n_out)
      throw ContractError("layer shape does not match architecture");
    const int off = out.offset(l);
    Eigen::Map<RowMatrix>(out.values.data() + off, n_out, n_in) =
        layers[l].weight;
    out.values.segment(off + n_in * n_out, n_out) = layers[l].bias;
  }
  return out;
}

MlpParams init_orthogonal(Architecture arch, std::mt19937_64& rng,
                          double hidden_gain, double output_gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Layer> layers;
  for (int l = 0; l < arch.num_layers(); ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const int rows = std::max(n_in, n_out);
    const int cols = std::min(n_in, n_out);
    Eigen::MatrixXd a(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) a(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(cols);
    for (int j = 0; j < cols; ++j) {
      if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    const double gain = l == arch.num_layers() - 1 ? output_gain : hidden_gain;
    Eigen::MatrixXd w = n_out >= n_in ? q : Eigen::MatrixXd(q.transpose());
    layers.push_back({gain * w, Eigen::VectorXd::Zero(n_out)});
  }
  return MlpParams::flatten(std::move(arch), layers);
}

Eigen::VectorXd forward(const MlpParams& params, const Eigen::VectorXd& input) {
  Eigen::MatrixXd x = input;
  return forward_batch(params, x).col(0);
}

Eigen::MatrixXd forward_batch(const MlpParams& params,
                              const Eigen::MatrixXd& inputs,
                              ForwardCache* cache) {
  const auto& arch = params.architecture;
  if (inputs.rows() != arch.input_size())
    throw ContractError("forward: input size " + std::to_string(inputs.rows()) +
                        " != " + std::to_string(arch.input_size()));
  if (cache) {
    cache->activations.clear();
    cache->activations.reserve(arch.num_layers() + 1);
    cache->activations.push_back(inputs);
  }
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < arch.num_layers(); ++l) {
    Eigen::MatrixXd z = params.weight(l) * a;
    z.colwise() += params.bias(l);
    apply_activation(layer_activation(arch, l), z);
    a = std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

Eigen::VectorXd backward_batch(const MlpParams& params,
                               const ForwardCache& cache,
                               const Eigen::MatrixXd& upstream,
                               Eigen::MatrixXd* input_grad) {
  check_cache(params, cache);
  const auto& arch = params.architecture;
  const int layers = arch.num_layers();
  const auto& out = cache.activations.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
    throw ContractError("backward: upstream gradient shape mismatch");

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.values.size());
  Eigen::MatrixXd delta =
      (upstream.array() *
       activation_slope(layer_activation(arch, layers - 1), out))
          .matrix();
  for (int l = layers - 1; l >= 0; --l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const auto& a_prev = cache.activations[l];
    const int off = params.offset(l);
    Eigen::Map<RowMatrix>(grad.data() + off, n_out, n_in) =
        delta * a_prev.transpose();
    grad.segment(off + n_in * n_out, n_out) = delta.rowwise().sum();
    Eigen::MatrixXd back = params.weight(l).transpose() * delta;
    if (l > 0) {
      delta = (back.array() *
               activation_slope(layer_activation(arch, l - 1), a_prev))
                  .matrix();
    } else if (input_grad) {
      *input_grad = std::move(back);
    }
  }
  return grad;
}

Gradients backward(const MlpParams& params, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& upstream) {
  ForwardCache cache;
  Eigen::MatrixXd x = input;
  forward_batch(params, x, &cache);
  if (upstream.size() != params.architecture.output_size())
    throw ContractError("backward: upstream gradient size mismatch");
  Eigen::MatrixXd up = upstream;
  Eigen::MatrixXd in_grad;
  Gradients g;
  g.params = backward_batch(params, cache, up, &in_grad);
  g.input = in_grad.col(0);
  return g;
}

Eigen::MatrixXd jvp_batch(const MlpParams& params, const ForwardCache& cache,
                          const Eigen::VectorXd& direction) {
  check_cache(params, cache);
  if (direction.size() != params.values.size())
    throw ContractError("jvp: direction size mismatch");
  const auto& arch = params.architecture;
  const Eigen::Index batch = cache.activations.front().cols();
  Eigen::MatrixXd tangent = Eigen::MatrixXd::Zero(arch.input_size(), batch);
  for (int l = 0; l < arch.num_layers(); ++l) {
    const int n_in = arch.layer_sizes[l];
    const int n_out = arch.layer_sizes[l + 1];
    const int off = params.offset(l);
    Eigen::Map<const RowMatrix> dw(direction.data() + off, n_out, n_in);
    Eigen::Map<const Eigen::VectorXd> db(direction.data() + off + n_in * n_out,
                                         n_out);
    Eigen::MatrixXd dz = dw * cache.activations[l];
    if (l > 0) dz += params.weight(l) * tangent;
    dz.colwise() += db;
    tangent = (dz.array() * activation_slope(layer_activation(arch, l),
                                             cache.activations[l + 1]))
                  .matrix();
  }
  return tangent;
}

Eigen::VectorXd GaussianPolicy::flat() const {
  Eigen::VectorXd out(mean_net.values.size() + log_std.size());
  out << mean_net.values, log_std;
  return out;
}

GaussianPolicy GaussianPolicy::with_flat(const Eigen::VectorXd& flat) const {
  if (flat.size() != parameter_count())
    throw ContractError("policy parameter vector size mismatch");
  GaussianPolicy out = *this;
  out.mean_net.values = flat.head(mean_net.values.size());
  out.log_std = flat.tail(log_std.size());
  out.clamp_log_std();
  return out;
}

void GaussianPolicy::clamp_log_std() {
  log_std = log_std.cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd);
}

GaussianPolicy make_policy(int obs_size, int action_size,
                           const std::vector<int>& hidden, std::mt19937_64& rng,
                           double init_log_std) {
  Architecture arch;
  arch.layer_sizes.push_back(obs_size);
  arch.layer_sizes.insert(arch.layer_sizes.end(), hidden.begin(), hidden.end());
  arch.layer_sizes.push_back(action_size);
  arch.hidden_activation = Activation::Tanh;
  arch.output_activation = Activation::Identity;
  GaussianPolicy policy;
  policy.mean_net = init_orthogonal(std::move(arch), rng, std::sqrt(2.0), 0.01);
  policy.log_std = Eigen::VectorXd::Constant(action_size, init_log_std);
  policy.clamp_log_std();
  return policy;
}

double gaussian_log_density(const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& log_std,
                            const Eigen::VectorXd& action) {
  if (mean.size() != log_std.size() || mean.size() != action.size())
    throw ContractError("gaussian_log_density: dimension mismatch");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    total += -0.5 * z * z - log_std[i] - half_log_2pi;
  }
  return total;
}

double log_prob(const GaussianPolicy& policy, const Eigen::VectorXd& obs,
                const Eigen::VectorXd& action) {
  return gaussian_log_density(forward(policy.mean_net, obs), policy.log_std,
                              action);
}

Eigen::VectorXd sample(const GaussianPolicy& policy, const Eigen::VectorXd& obs,
                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd a = forward(policy.mean_net, obs);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    a[i] += std::exp(policy.log_std[i]) * normal(rng);
  return a;
}

Eigen::VectorXd log_prob_batch(const Eigen::MatrixXd& means,
                               const Eigen::VectorXd& log_std,
                               const Eigen::MatrixXd& actions) {
  if (means.rows() != log_std.size() || means.rows() != actions.rows() ||
      means.cols() != actions.cols())
    throw ContractError("log_prob_batch: dimension mismatch");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  Eigen::ArrayXXd z = (actions - means).array().colwise() * inv_std;
  Eigen::VectorXd out = (-0.5 * z.square()).colwise().sum().transpose().matrix();
  out.array() -= log_std.sum() + half_log_2pi * static_cast<double>(means.rows());
  return out;
}

double mean_kl(const Eigen::MatrixXd& mean_a, const Eigen::VectorXd& log_std_a,
               const Eigen::MatrixXd& mean_b,
               const Eigen::VectorXd& log_std_b) {
  if (mean_a.rows() != mean_b.rows() || mean_a.cols() != mean_b.cols())
    throw ContractError("kl: mean shape mismatch");
  if (mean_a.cols() == 0) return 0.0;
  const Eigen::ArrayXd var_a = (2.0 * log_std_a.array()).exp();
  const Eigen::ArrayXd inv_var_b = (-2.0 * log_std_b.array()).exp();
  // KL(a||b) per dim = log(sb/sa) + (sa^2 + (ma-mb)^2) / (2 sb^2) - 1/2
  const double constant =
      (log_std_b.array() - log_std_a.array() + 0.5 * var_a * inv_var_b - 0.5)
          .sum();
  const Eigen::ArrayXXd diff = (mean_a - mean_b).array();
  const double quad =
      (diff.square().colwise() * (0.5 * inv_var_b)).sum() /
      static_cast<double>(mean_a.cols());
  return constant + quad;
}

double kl(const GaussianPolicy& a, const GaussianPolicy& b,
          const Eigen::MatrixXd& obs_batch) {
  return mean_kl(forward_batch(a.mean_net, obs_batch), a.log_std,
                 forward_batch(b.mean_net, obs_batch), b.log_std);
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
    t = 0;
  }
  if (grad.size() != params.size())
    throw ContractError("adam: gradient size mismatch");
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -=
      lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["kind"] = checkpoint.kind;
  header["layer_sizes"] = checkpoint.architecture.layer_sizes;
  header["hidden_activation"] =
      to_string(checkpoint.architecture.hidden_activation);
  header["output_activation"] =
      to_string(checkpoint.architecture.output_activation);
  header["seed"] = checkpoint.seed;
  header["step"] = checkpoint.step;
  header["count"] = checkpoint.values.size();
  out << header.dump() << '\n';
  for (double v : checkpoint.values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i)
      bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    out.write(bytes, 8);
  }
  if (!out) throw ParseError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("checkpoint: missing header");
  Checkpoint cp;
  std::size_t count = 0;
  try {
    auto header = nlohmann::json::parse(line);
    cp.kind = header.at("kind").get<std::string>();
    cp.architecture.layer_sizes =
        header.at("layer_sizes").get<std::vector<int>>();
    cp.architecture.hidden_activation =
        parse_activation(header.at("hidden_activation").get<std::string>());
    cp.architecture.output_activation =
        parse_activation(header.at("output_activation").get<std::string>());
    cp.seed = header.at("seed").get<std::uint64_t>();
    cp.step = header.at("step").get<std::int64_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  cp.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8))
      throw ParseError("checkpoint: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    cp.values[k] = std::bit_cast<double>(bits);
  }
  return cp;
}

void save_policy(const std::string& path, const GaussianPolicy& policy,
                 std::uint64_t seed, std::int64_t step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  Checkpoint cp;
  cp.kind = "gaussian_policy";
  cp.architecture = policy.mean_net.architecture;
  cp.seed = seed;
  cp.step = step;
  const Eigen::VectorXd flat = policy.flat();
  cp.values.assign(flat.data(), flat.data() + flat.size());
  write_checkpoint(out, cp);
}

GaussianPolicy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  Checkpoint cp = read_checkpoint(in);
  if (cp.kind != "gaussian_policy")
    throw ParseError("checkpoint kind '" + cp.kind + "' is not a policy");
  const int n = cp.architecture.parameter_count();
  const int actions = cp.architecture.output_size();
  if (static_cast<int>(cp.values.size()) != n + actions)
    throw ParseError("policy checkpoint has wrong value count");
  Eigen::Map<const Eigen::VectorXd> flat(cp.values.data(),
                                         static_cast<Eigen::Index>(cp.values.size()));
  GaussianPolicy policy;
  policy.mean_net = MlpParams(cp.architecture, flat.head(n));
  policy.log_std = flat.tail(actions);
  return policy;
}

}  // namespace autocost::nn
