#ifndef AUTOCOST_NN_HPP_
#define AUTOCOST_NN_HPP_

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace autocost::nn {

enum class Activation { Identity, Tanh, Sigmoid };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

struct Architecture {
  std::vector<int> layer_sizes;  // input, hidden..., output
  Activation hidden_activation = Activation::Tanh;
  Activation output_activation = Activation::Identity;

  // Throws ContractError unless there are >= 2 positive layer sizes.
  void validate() const;
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  // Sum over layers of (n_in + 1) * n_out.
  int parameter_count() const;

  bool operator==(const Architecture&) const = default;
};

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Layer {
  Eigen::MatrixXd weight;  // n_out x n_in
  Eigen::VectorXd bias;    // n_out
};

// Flat parameters. Per layer: the weight matrix row-major, then the bias.
struct MlpParams {
  Architecture architecture;
  Eigen::VectorXd values;

  MlpParams() = default;
  MlpParams(Architecture arch, Eigen::VectorXd flat);

  static MlpParams zeros(Architecture arch);

  Eigen::Map<const RowMatrix> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  // Offset of a layer's first weight inside `values`.
  int offset(int layer) const;

  std::vector<Layer> unflatten() const;
  static MlpParams flatten(Architecture arch, const std::vector<Layer>& layers);
};

// Orthogonal rows/columns scaled by `gain`; zero biases.
MlpParams init_orthogonal(Architecture arch, std::mt19937_64& rng,
                          double hidden_gain, double output_gain);

// Post-activation outputs of every layer; activations[0] is the input.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;
};

Eigen::VectorXd forward(const MlpParams& params, const Eigen::VectorXd& input);

// Columns are samples: inputs is n_in x batch, result is n_out x batch.
Eigen::MatrixXd forward_batch(const MlpParams& params,
                              const Eigen::MatrixXd& inputs,
                              ForwardCache* cache = nullptr);

struct Gradients {
  Eigen::VectorXd params;
  Eigen::VectorXd input;
};

// Gradients of upstream . forward(params, input).
Gradients backward(const MlpParams& params, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& upstream);

// Summed over the batch. `upstream` is n_out x batch.
Eigen::VectorXd backward_batch(const MlpParams& params,
                               const ForwardCache& cache,
                               const Eigen::MatrixXd& upstream,
                               Eigen::MatrixXd* input_grad = nullptr);

// Directional derivative of every output along a parameter-space direction
// (forward mode). Result is n_out x batch.
Eigen::MatrixXd jvp_batch(const MlpParams& params, const ForwardCache& cache,
                          const Eigen::VectorXd& direction);

// Diagonal Gaussian with a state-independent log standard deviation.
struct GaussianPolicy {
  static constexpr double kMinLogStd = -20.0;
  static constexpr double kMaxLogStd = 2.0;

  MlpParams mean_net;
  Eigen::VectorXd log_std;

  int observation_size() const { return mean_net.architecture.input_size(); }
  int action_size() const { return mean_net.architecture.output_size(); }
  int parameter_count() const {
    return static_cast<int>(mean_net.values.size() + log_std.size());
  }

  // mean-net values followed by log_std.
  Eigen::VectorXd flat() const;
  GaussianPolicy with_flat(const Eigen::VectorXd& flat) const;
  void clamp_log_std();
};

GaussianPolicy make_policy(int obs_size, int action_size,
                           const std::vector<int>& hidden, std::mt19937_64& rng,
                           double init_log_std = -0.5);

double gaussian_log_density(const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& log_std,
                            const Eigen::VectorXd& action);

double log_prob(const GaussianPolicy& policy, const Eigen::VectorXd& obs,
                const Eigen::VectorXd& action);

// mean + std * z with z ~ N(0, I).
Eigen::VectorXd sample(const GaussianPolicy& policy, const Eigen::VectorXd& obs,
                       std::mt19937_64& rng);

// Mean over the batch of the analytic KL(a || b). obs_batch is n_obs x batch.
double kl(const GaussianPolicy& a, const GaussianPolicy& b,
          const Eigen::MatrixXd& obs_batch);

// Same, from precomputed means (n_act x batch).
double mean_kl(const Eigen::MatrixXd& mean_a, const Eigen::VectorXd& log_std_a,
               const Eigen::MatrixXd& mean_b, const Eigen::VectorXd& log_std_b);

Eigen::VectorXd log_prob_batch(const Eigen::MatrixXd& means,
                               const Eigen::VectorXd& log_std,
                               const Eigen::MatrixXd& actions);

// First-order optimizer; `step` descends along `grad`.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;

  explicit Adam(double learning_rate = 1e-3) : lr(learning_rate) {}
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

// Checkpoint file: one line of JSON (kind, architecture, seed, step, count)
// followed by `count` little-endian IEEE-754 doubles.
struct Checkpoint {
  std::string kind;
  Architecture architecture;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::vector<double> values;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);

void save_policy(const std::string& path, const GaussianPolicy& policy,
                 std::uint64_t seed, std::int64_t step);
GaussianPolicy load_policy(const std::string& path);

}  // namespace autocost::nn

#endif  // AUTOCOST_NN_HPP_
