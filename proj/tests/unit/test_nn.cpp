#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "blockforge/errors.hpp"
#include "blockforge/nn.hpp"
#include "oracles.hpp"

using namespace blockforge;

namespace {

Architecture mini_arch() {
  Architecture a;
  a.d = 16;
  a.base_width = 4;
  a.levels = 2;
  a.stem = 1;
  return a;
}

FeatureImage random_binary(int d, std::mt19937_64& rng, double p = 0.2) {
  std::bernoulli_distribution b(p);
  FeatureImage img(d);
  for (double& v : img.pixels()) v = b(rng) ? 1.0 : 0.0;
  return img;
}

FeatureImage random_real(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureImage img(d);
  for (double& v : img.pixels()) v = n(rng);
  return img;
}

struct Batch {
  std::vector<FeatureImage> psi, phi, y;
  std::vector<TaskImage> xi;
  std::vector<NetInput> inputs;
};

Batch random_batch(int d, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Batch b;
  for (int k = 0; k < n; ++k) {
    b.psi.push_back(random_binary(d, rng));
    b.phi.push_back(random_binary(d, rng, 0.05));
    b.xi.push_back({random_binary(d, rng, 0.05), random_binary(d, rng, 0.01)});
    FeatureImage y = random_binary(d, rng, 0.1);
    y.scale(0.9);
    y += b.phi.back();
    b.y.push_back(y);
  }
  for (int k = 0; k < n; ++k) b.inputs.push_back({&b.psi[k], &b.phi[k], &b.xi[k]});
  return b;
}

}  // namespace

TEST(Architecture, DefaultsAndValidation) {
  const Architecture a = Architecture::for_resolution(64);
  EXPECT_EQ(a.d, 64);
  EXPECT_EQ(a.internal_resolution(), 16);
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(Architecture::for_resolution(32).internal_resolution(), 16);
  Architecture bad = a;
  bad.d = 60;
  EXPECT_THROW(bad.validate(), ShapeError);
}

TEST(Params, ManifestIsContiguous) {
  const auto m = parameter_manifest(Architecture::for_resolution(64));
  std::size_t offset = 0;
  for (const ParamSpec& s : m) {
    EXPECT_EQ(s.offset, offset) << s.name;
    offset += s.size();
  }
  EXPECT_EQ(init_params<float>(1, Architecture::for_resolution(64)).count(), offset);
}

TEST(Params, SeedDeterminism) {
  const Architecture a = Architecture::for_resolution(64);
  const auto p1 = init_params<float>(5, a);
  const auto p2 = init_params<float>(5, a);
  const auto p3 = init_params<float>(6, a);
  EXPECT_EQ(p1.values, p2.values);
  EXPECT_NE(p1.values, p3.values);
  EXPECT_TRUE(p1.all_finite());
}

TEST(Forward, ZeroInputIsFinite) {
  for (int d : {32, 64}) {
    const auto p = init_params<float>(1, Architecture::for_resolution(d));
    const FeatureImage zero(d);
    const TaskImage xi{FeatureImage(d), FeatureImage(d)};
    const FeatureImage out = forward_psi(p, zero, zero, xi);
    EXPECT_EQ(out.d(), d);
    for (double v : out.pixels()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Forward, RejectsMismatchedResolution) {
  const auto p = init_params<float>(1, Architecture::for_resolution(64));
  const FeatureImage img(32);
  const TaskImage xi{FeatureImage(32), FeatureImage(32)};
  EXPECT_THROW(forward_psi(p, img, img, xi), ShapeError);
}

TEST(Forward, BatchedEqualsSingle) {
  const auto p = init_params<float>(3, Architecture::for_resolution(64));
  Batch b = random_batch(64, 5, 8);
  const auto batched = forward_psi(p, b.inputs);
  ASSERT_EQ(batched.size(), 5u);
  for (int k = 0; k < 5; ++k) {
    const FeatureImage single = forward_psi(p, b.psi[k], b.phi[k], b.xi[k]);
    for (std::size_t i = 0; i < single.size(); ++i) ASSERT_NEAR(single.pixels()[i], batched[k].pixels()[i], 1e-6);
  }
}

TEST(Forward, CandidateQMatchesFullForward) {
  const auto p = init_params<float>(4, Architecture::for_resolution(64));
  std::mt19937_64 rng(2);
  Batch b = random_batch(64, 70, 9);
  RewardField rho{random_real(64, rng), 2.0, 0.001};
  std::vector<NetInput> inputs;
  for (auto& phi : b.phi) inputs.push_back({&b.psi[0], &phi, &b.xi[0]});
  const auto outs = forward_psi(p, inputs);
  const auto q = candidate_q_values(p, b.psi[0], b.xi[0], b.phi, rho);
  ASSERT_EQ(q.size(), outs.size());
  for (std::size_t k = 0; k < q.size(); ++k) EXPECT_NEAR(q[k], inner(outs[k], rho.field), 1e-3);
}

TEST(Gradient, MatchesCentralDifferencesInDoublePrecision) {
  const auto p = oracle::with_random_biases(init_params<double>(11, mini_arch()), 5);
  Batch b = random_batch(16, 3, 12);
  std::vector<double> grad;
  loss_and_gradient(p, b.inputs, b.y, &grad);
  ASSERT_EQ(grad.size(), p.count());
  const double h = 1e-5;
  double diff2 = 0.0;
  double ref2 = 0.0;
  auto q = p;
  for (std::size_t i = 0; i < p.count(); ++i) {
    q.values[i] = p.values[i] + h;
    const double lp = loss_and_gradient(q, b.inputs, b.y, nullptr);
    q.values[i] = p.values[i] - h;
    const double lm = loss_and_gradient(q, b.inputs, b.y, nullptr);
    q.values[i] = p.values[i];
    const double fd = (lp - lm) / (2 * h);
    diff2 += (fd - grad[i]) * (fd - grad[i]);
    ref2 += fd * fd;
  }
  EXPECT_LT(std::sqrt(diff2 / ref2), 1e-4);
}

TEST(Gradient, ZeroAtFixedPoint) {
  const auto p = init_params<double>(2, mini_arch());
  Batch b = random_batch(16, 2, 3);
  b.y = forward_psi(p, b.inputs);
  std::vector<double> grad;
  EXPECT_NEAR(loss_and_gradient(p, b.inputs, b.y, &grad), 0.0, 1e-20);
  for (double g : grad) ASSERT_NEAR(g, 0.0, 1e-12);
}

TEST(Adam, ZeroLearningRateKeepsParams) {
  auto p = init_params<float>(2, mini_arch());
  const auto before = p.values;
  Batch b = random_batch(16, 4, 5);
  AdamState st;
  std::vector<float> grad;
  const double l0 = loss_and_gradient(p, b.inputs, b.y, &grad);
  adam_update(p.values, grad, 0.0, st);
  EXPECT_EQ(p.values, before);
  EXPECT_EQ(loss_and_gradient(p, b.inputs, b.y, nullptr), l0);
}

TEST(Adam, OverfitsOneBatch) {
  auto p = init_params<double>(7, mini_arch());
  Batch b = random_batch(16, 8, 6);
  AdamState st;
  std::vector<double> grad;
  const double l0 = loss_and_gradient(p, b.inputs, b.y, &grad);
  double l = l0;
  int steps = 0;
  while (steps < 200 && l > 0.5 * l0) {
    adam_update(p.values, grad, 1e-2, st);
    l = loss_and_gradient(p, b.inputs, b.y, &grad);
    ++steps;
  }
  EXPECT_LE(l, 0.5 * l0) << "after " << steps << " steps";
}
