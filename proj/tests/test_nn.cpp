#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "autocost/errors.hpp"
#include "autocost/nn.hpp"
#include "oracles.hpp"

using namespace autocost;
using namespace autocost::nn;

TEST(Architecture, ParameterCount) {
  Architecture a{{8, 4, 1}, Activation::Sigmoid, Activation::Sigmoid};
  EXPECT_EQ(a.parameter_count(), 41);
  Architecture b{{3, 5, 2}};
  EXPECT_EQ(b.parameter_count(), 4 * 5 + 6 * 2);
  Architecture bad{{3}};
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(Forward, ZeroParamsSigmoidGivesHalf) {
  const auto p = MlpParams::zeros({{3, 4, 2}, Activation::Tanh, Activation::Sigmoid});
  const auto y = forward(p, Eigen::Vector3d(0.3, -2.0, 5.0));
  EXPECT_EQ(y[0], 0.5);
  EXPECT_EQ(y[1], 0.5);
}

TEST(Forward, IdentityLayerPassesInput) {
  Architecture a{{3, 3}, Activation::Tanh, Activation::Identity};
  auto p = MlpParams::zeros(a);
  p.values.head(9) << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const Eigen::Vector3d x(0.1, -0.2, 0.3);
  EXPECT_EQ(forward(p, x), x);
}

TEST(Forward, DimensionMismatchThrows) {
  const auto p = MlpParams::zeros({{3, 2}});
  EXPECT_THROW(forward(p, Eigen::Vector2d(1, 2)), ContractError);
  EXPECT_THROW(MlpParams(Architecture{{3, 2}}, Eigen::VectorXd::Zero(5)), ContractError);
}

TEST(Forward, TanhMatchesLibm) {
  Architecture a{{1, 1}, Activation::Tanh, Activation::Tanh};
  auto p = MlpParams::zeros(a);
  p.values[0] = 1.0;
  for (double x : {-30.0, -3.0, -0.5, -1e-8, 0.0, 1e-8, 0.7, 4.0, 700.0}) {
    Eigen::VectorXd in(1);
    in[0] = x;
    EXPECT_NEAR(forward(p, in)[0], std::tanh(x), 1e-15) << x;
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const auto net = oracle::random_net(rng, 100);
    const auto err = oracle::gradient_relative_error(net, rng);
    EXPECT_LT(err, 1e-4) << "trial " << trial;
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(2);
  const auto net = oracle::random_net(rng, 60);
  Eigen::VectorXd x = Eigen::VectorXd::Random(net.architecture.input_size());
  const auto g = backward(net, x, Eigen::VectorXd::Zero(net.architecture.output_size()));
  EXPECT_EQ(g.params.squaredNorm(), 0.0);
  EXPECT_EQ(g.input.squaredNorm(), 0.0);
}

TEST(Backward, LinearLayerWeightGradient) {
  Architecture a{{3, 2}, Activation::Tanh, Activation::Identity};
  std::mt19937_64 rng(3);
  const auto p = init_orthogonal(a, rng, 1.0, 1.0);
  const Eigen::Vector3d x(0.5, -1.0, 2.0);
  const Eigen::Vector2d up(0.3, -0.7);
  const auto g = backward(p, x, up);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(g.params[i * 3 + j], up[i] * x[j]);
  EXPECT_DOUBLE_EQ(g.params[6], up[0]);
  EXPECT_DOUBLE_EQ(g.params[7], up[1]);
}

TEST(Backward, BatchSumsPerSampleGradients) {
  std::mt19937_64 rng(4);
  const auto net = oracle::random_net(rng, 80);
  const int n = 7;
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(net.architecture.input_size(), n);
  Eigen::MatrixXd up = Eigen::MatrixXd::Random(net.architecture.output_size(), n);
  ForwardCache cache;
  forward_batch(net, x, &cache);
  const Eigen::VectorXd batch = backward_batch(net, cache, up);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(batch.size());
  for (int i = 0; i < n; ++i) sum += backward(net, x.col(i), up.col(i)).params;
  EXPECT_LT((batch - sum).norm(), 1e-12 * (1 + sum.norm()));
}

TEST(Jvp, MatchesDirectionalFiniteDifference) {
  std::mt19937_64 rng(5);
  const auto net = oracle::random_net(rng, 90);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(net.architecture.input_size(), 4);
  Eigen::VectorXd v = Eigen::VectorXd::Random(net.values.size());
  ForwardCache cache;
  forward_batch(net, x, &cache);
  const Eigen::MatrixXd jv = jvp_batch(net, cache, v);
  const double h = 1e-6;
  const Eigen::MatrixXd fd =
      (forward_batch(MlpParams(net.architecture, net.values + h * v), x) -
       forward_batch(MlpParams(net.architecture, net.values - h * v), x)) /
      (2 * h);
  EXPECT_LT((jv - fd).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Params, FlattenRoundTrip) {
  std::mt19937_64 rng(6);
  const auto net = oracle::random_net(rng, 100);
  const auto layers = net.unflatten();
  const auto back = MlpParams::flatten(net.architecture, layers);
  EXPECT_EQ(back.values, net.values);
}

TEST(Init, OrthogonalRows) {
  std::mt19937_64 rng(7);
  const auto p = init_orthogonal({{6, 4, 3}}, rng, std::sqrt(2.0), 0.01);
  const Eigen::MatrixXd w0 = p.weight(0);
  const Eigen::MatrixXd gram = w0 * w0.transpose();
  EXPECT_LT((gram - 2.0 * Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-10);
  EXPECT_EQ(p.bias(0).squaredNorm(), 0.0);
}

TEST(Gaussian, LogProbAtMeanUnitStd) {
  std::mt19937_64 rng(8);
  auto policy = make_policy(3, 2, {4}, rng, 0.0);
  const Eigen::Vector3d obs(0.1, 0.2, 0.3);
  const Eigen::VectorXd mean = forward(policy.mean_net, obs);
  EXPECT_NEAR(log_prob(policy, obs, mean), -std::log(2 * std::numbers::pi), 1e-12);
}

TEST(Gaussian, KlIdentityAndUnitShift) {
  std::mt19937_64 rng(9);
  auto p = make_policy(3, 2, {4}, rng, 0.0);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(3, 10);
  EXPECT_EQ(kl(p, p, obs), 0.0);
  Eigen::MatrixXd ma = Eigen::MatrixXd::Zero(2, 5), mb = ma;
  mb.row(0).array() += 1.0;
  EXPECT_DOUBLE_EQ(mean_kl(ma, Eigen::Vector2d::Zero(), mb, Eigen::Vector2d::Zero()), 0.5);
}

TEST(Gaussian, KlNonNegative) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 20; ++t) {
    auto a = make_policy(4, 2, {5}, rng, -0.5);
    auto b = make_policy(4, 2, {5}, rng, 0.3);
    EXPECT_GE(kl(a, b, Eigen::MatrixXd::Random(4, 16)), 0.0);
  }
}

TEST(Gaussian, SampleStatistics) {
  std::mt19937_64 rng(11);
  auto p = make_policy(2, 2, {3}, rng, std::log(0.5));
  const Eigen::Vector2d obs(0.4, -0.1);
  const Eigen::VectorXd mean = forward(p.mean_net, obs);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd a = sample(p, obs, rng) - mean;
    sum += a;
    sq += a.cwiseProduct(a);
  }
  EXPECT_LT((sum / n).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_NEAR(std::sqrt(sq[0] / n), 0.5, 0.02);
}

TEST(Gaussian, LogStdIsClamped) {
  std::mt19937_64 rng(12);
  auto p = make_policy(2, 2, {3}, rng);
  Eigen::VectorXd flat = p.flat();
  flat.tail(2) << 50.0, -50.0;
  const auto q = p.with_flat(flat);
  EXPECT_EQ(q.log_std[0], GaussianPolicy::kMaxLogStd);
  EXPECT_EQ(q.log_std[1], GaussianPolicy::kMinLogStd);
  EXPECT_EQ(p.log_std[0], -0.5);
}

TEST(Adam, MinimizesQuadratic) {
  Adam opt(0.05);
  Eigen::VectorXd x = Eigen::Vector2d(3.0, -2.0);
  for (int i = 0; i < 2000; ++i) opt.step(x, 2.0 * x);
  EXPECT_LT(x.norm(), 1e-3);
}

TEST(Checkpoint, RoundTripIsExact) {
  std::mt19937_64 rng(13);
  auto p = make_policy(5, 2, {6, 6}, rng);
  Checkpoint c{"gaussian_policy", p.mean_net.architecture, 77, 12,
               std::vector<double>(p.mean_net.values.data(),
                                   p.mean_net.values.data() + p.mean_net.values.size())};
  std::stringstream ss;
  write_checkpoint(ss, c);
  const auto back = read_checkpoint(ss);
  EXPECT_EQ(back.values, c.values);
  EXPECT_EQ(back.architecture, c.architecture);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.step, 12);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  std::mt19937_64 rng(14);
  auto p = make_policy(3, 2, {4}, rng);
  Checkpoint c{"x", p.mean_net.architecture, 1, 1,
               std::vector<double>(p.mean_net.values.data(),
                                   p.mean_net.values.data() + p.mean_net.values.size())};
  std::stringstream ss;
  write_checkpoint(ss, c);
  std::string text = ss.str();
  text.resize(text.size() - 5);
  std::stringstream cut(text);
  EXPECT_THROW(read_checkpoint(cut), ParseError);
}
