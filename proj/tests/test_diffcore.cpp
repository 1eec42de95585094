#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rlr/diffcore.hpp"

using namespace rlr;

namespace {

// Straight-line re-implementation of the mlp-tanh forward pass over the flat
// parameter layout; shares no code with backbone_forward.
Vector mlp_forward_reference(const ParamVector& p, int d, int m, const Vector& x, bool tc, double tt) {
  const int in = d + (tc ? 1 : 0);
  std::vector<double> u(static_cast<std::size_t>(in));
  for (int i = 0; i < d; ++i) u[i] = x[i];
  if (tc) u[d] = tt;
  std::vector<double> hid(static_cast<std::size_t>(m));
  int off = 0;
  const int b1 = m * in, w2 = b1 + m, b2 = w2 + d * m;
  for (int r = 0; r < m; ++r) {
    double acc = p[b1 + r];
    for (int c = 0; c < in; ++c) acc += p[off + r * in + c] * u[c];
    hid[r] = std::tanh(acc);
  }
  Vector y(d);
  for (int r = 0; r < d; ++r) {
    double acc = p[b2 + r];
    for (int c = 0; c < m; ++c) acc += p[w2 + r * m + c] * hid[c];
    y[r] = acc;
  }
  return y;
}

std::vector<Backbone> probe_backbones() {
  return {Backbone::linear(2), Backbone::linear(3, true, 5), Backbone::mlp(2, 4),
          Backbone::mlp(3, 5, true, 6)};
}

}  // namespace

TEST(BackboneForward, ZeroWeightLinearReturnsBias) {
  const Backbone bb = Backbone::linear(3);
  ParamVector p = ParamVector::Zero(bb.param_count());
  p.tail(3) << 0.5, -1.0, 2.0;
  const Vector x = Vector::Random(3);
  EXPECT_EQ(backbone_forward(bb, p, x, 1), p.tail(3));
}

TEST(BackboneForward, IdentityLinearReturnsInput) {
  const Backbone bb = Backbone::linear(3);
  ParamVector p = ParamVector::Zero(bb.param_count());
  Eigen::Map<RowMajorMatrix>(p.data(), 3, 3).setIdentity();
  const Vector x = (Vector(3) << 0.1, -0.2, 3.0).finished();
  EXPECT_EQ(backbone_forward(bb, p, x, 2), x);
}

TEST(BackboneForward, MlpMatchesStraightLineReference) {
  const Backbone bb = Backbone::mlp(2, 4);
  const ParamVector p = init_params(bb, 0);
  const Vector x = (Vector(2) << 1.0, 0.0).finished();
  const Vector ref = mlp_forward_reference(p, 2, 4, x, false, 0.0);
  EXPECT_LT((backbone_forward(bb, p, x, 0) - ref).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(BackboneForward, TimeConditioningAppendsStepFraction) {
  const Backbone bb = Backbone::mlp(2, 3, true, 8);
  const ParamVector p = init_params(bb, 3);
  const Vector x = (Vector(2) << 0.3, -0.7).finished();
  for (int t : {1, 4, 8}) {
    const Vector ref = mlp_forward_reference(p, 2, 3, x, true, t / 8.0);
    EXPECT_LT((backbone_forward(bb, p, x, t) - ref).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(BackboneForward, DimensionMismatchIsContractViolation) {
  const Backbone bb = Backbone::mlp(2, 4);
  const ParamVector p = init_params(bb, 0);
  EXPECT_THROW(backbone_forward(bb, p, Vector::Zero(3), 1), ContractViolation);
  EXPECT_THROW(backbone_forward(bb, ParamVector::Zero(3), Vector::Zero(2), 1), ContractViolation);
  EXPECT_THROW(backbone_vjp_x(bb, p, Vector::Zero(2), 1, Vector::Zero(1)), ContractViolation);
}

TEST(BackboneVjp, IdentityLinearPassesCotangentThrough) {
  const Backbone bb = Backbone::linear(3);
  ParamVector p = ParamVector::Zero(bb.param_count());
  Eigen::Map<RowMajorMatrix>(p.data(), 3, 3).setIdentity();
  const Vector v = (Vector(3) << 1.0, 2.0, -3.0).finished();
  EXPECT_EQ(backbone_vjp_x(bb, p, Vector::Random(3), 1, v), v);
}

TEST(BackboneVjp, LinearInputVjpIsTransposeProduct) {
  const Backbone bb = Backbone::linear(3);
  const ParamVector p = init_params(bb, 11);
  const RowMajorMatrix a = Eigen::Map<const RowMajorMatrix>(p.data(), 3, 3);
  const Vector v = Vector::Random(3);
  EXPECT_LT((backbone_vjp_x(bb, p, Vector::Random(3), 1, v) - a.transpose() * v).norm(), 1e-15);
}

TEST(BackboneVjp, ZeroCotangentGivesZeroParamGradient) {
  const Backbone bb = Backbone::mlp(2, 4);
  const ParamVector g = backbone_vjp_theta(bb, init_params(bb, 0), Vector::Random(2), 1, Vector::Zero(2));
  EXPECT_EQ(g.size(), bb.param_count());
  EXPECT_EQ(g, ParamVector::Zero(bb.param_count()));
}

TEST(BackboneVjp, LinearParamVjpOfUnitCotangentIsRowStructure) {
  const Backbone bb = Backbone::linear(3);
  const Vector x = (Vector(3) << 0.5, -1.5, 2.0).finished();
  for (int k = 0; k < 3; ++k) {
    const Vector ek = Vector::Unit(3, k);
    const ParamVector g = backbone_vjp_theta(bb, init_params(bb, 1), x, 1, ek);
    ParamVector want = ParamVector::Zero(12);
    want.segment(3 * k, 3) = x;  // row k of W
    want[9 + k] = 1.0;           // bias slot k
    EXPECT_EQ(g, want) << "k=" << k;
  }
}

TEST(BackboneVjp, MlpMatchesFiniteDifferences) {
  const Backbone bb = Backbone::mlp(2, 4);
  const ParamVector p = init_params(bb, 0);
  const Vector x = (Vector(2) << 1.0, 0.0).finished();
  std::mt19937_64 eng(5);
  std::normal_distribution<double> n01;
  const Vector v = (Vector(2) << n01(eng), n01(eng)).finished();
  const Vector fx = fd_gradient([&](const Vector& xx) { return v.dot(backbone_forward(bb, p, xx, 0)); }, x, 1e-5);
  EXPECT_LT(max_rel_error(backbone_vjp_x(bb, p, x, 0, v), fx), 1e-6);
  const Vector ft = fd_gradient([&](const Vector& th) { return v.dot(backbone_forward(bb, th, x, 0)); }, p, 1e-5);
  EXPECT_LT(max_rel_error(backbone_vjp_theta(bb, p, x, 0, v), ft), 1e-6);
}

// 100 random (params, x, v) probes per backbone kind.
TEST(BackboneVjpProperty, AgreesWithCentralDifferences) {
  std::mt19937_64 eng(2024);
  std::normal_distribution<double> n01;
  for (const Backbone& bb : probe_backbones()) {
    double worst_x = 0.0, worst_t = 0.0;
    for (int probe = 0; probe < 100; ++probe) {
      const ParamVector p = init_params(bb, 1000 + probe);
      Vector x(bb.latent_dim), v(bb.latent_dim);
      for (int i = 0; i < bb.latent_dim; ++i) x[i] = n01(eng), v[i] = n01(eng);
      const int t = 1 + probe % bb.horizon;
      const BackboneVjp r = backbone_vjp(bb, p, x, t, v);
      const Vector fx = fd_gradient([&](const Vector& xx) { return v.dot(backbone_forward(bb, p, xx, t)); }, x, 1e-5);
      const Vector ft = fd_gradient([&](const Vector& th) { return v.dot(backbone_forward(bb, th, x, t)); }, p, 1e-5);
      worst_x = std::max(worst_x, max_rel_error(r.dx, fx));
      worst_t = std::max(worst_t, max_rel_error(r.dtheta, ft));
    }
    EXPECT_LT(worst_x, 1e-6) << to_string(bb.kind);
    EXPECT_LT(worst_t, 1e-6) << to_string(bb.kind);
  }
}

TEST(BackboneVjpProperty, LinearInCotangent) {
  std::mt19937_64 eng(7);
  std::normal_distribution<double> n01;
  for (const Backbone& bb : probe_backbones()) {
    for (int probe = 0; probe < 50; ++probe) {
      const ParamVector p = init_params(bb, 50 + probe);
      Vector x(bb.latent_dim), v1(bb.latent_dim), v2(bb.latent_dim);
      for (int i = 0; i < bb.latent_dim; ++i) x[i] = n01(eng), v1[i] = n01(eng), v2[i] = n01(eng);
      const double a = n01(eng), b = n01(eng);
      const BackboneVjp lhs = backbone_vjp(bb, p, x, 1, a * v1 + b * v2);
      const BackboneVjp r1 = backbone_vjp(bb, p, x, 1, v1), r2 = backbone_vjp(bb, p, x, 1, v2);
      EXPECT_LT((lhs.dx - (a * r1.dx + b * r2.dx)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((lhs.dtheta - (a * r1.dtheta + b * r2.dtheta)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ParamLayout, ParamCountIsPureFunctionOfShape) {
  EXPECT_EQ(Backbone::linear(2).param_count(), 2 * 2 + 2);
  EXPECT_EQ(Backbone::linear(2, true, 5).param_count(), 2 * 3 + 2);
  EXPECT_EQ(Backbone::mlp(2, 4).param_count(), 4 * 2 + 4 + 2 * 4 + 2);
  EXPECT_EQ(Backbone::mlp(2, 4, true, 9).param_count(), 4 * 3 + 4 + 2 * 4 + 2);
}

TEST(Reward, NegQuadraticGradient) {
  const Vector target = (Vector(2) << 0.5, -0.5).finished();
  const RewardFn r = RewardFn::neg_quadratic(target);
  EXPECT_EQ(reward_grad(r, target), Vector::Zero(2));
  const Vector u = (Vector(2) << 0.25, 1.0).finished();
  EXPECT_LT((reward_grad(r, target + u) + 2.0 * u).norm(), 1e-15);
}

TEST(Reward, RandomMlpScoreMatchesFiniteDifferences) {
  const RewardFn r = RewardFn::random_mlp(7, 2);
  const Vector x0 = (Vector(2) << 0.3, -0.1).finished();
  const Vector fd = fd_gradient([&](const Vector& x) { return r.value(x); }, x0, 1e-5);
  EXPECT_LT(max_rel_error(reward_grad(r, x0), fd), 1e-6);
}

TEST(Reward, RosenbrockMatchesFiniteDifferences) {
  const RewardFn r = RewardFn::rosenbrock();
  const Vector x0 = (Vector(2) << -0.4, 0.9).finished();
  const Vector fd = fd_gradient([&](const Vector& x) { return r.value(x); }, x0, 1e-5);
  EXPECT_LT(max_rel_error(reward_grad(r, x0), fd), 1e-6);
  EXPECT_EQ(reward_grad(r, (Vector(2) << 1.0, 1.0).finished()), Vector::Zero(2));
}

TEST(Reward, DimensionChecked) {
  EXPECT_THROW(RewardFn::rosenbrock().value(Vector::Zero(3)), ContractViolation);
}

TEST(FdGradient, ConstantFunctionHasZeroGradient) {
  const Vector g = fd_gradient([](const Vector&) { return 3.5; }, Vector::Random(4), 1e-5);
  EXPECT_EQ(g, Vector::Zero(4));
}

TEST(FdGradient, SquaredNormIsExactUpToRounding) {
  const Vector th = (Vector(2) << 1.0, 2.0).finished();
  const Vector g = fd_gradient([](const Vector& x) { return x.squaredNorm(); }, th, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FdGradient, NonFiniteValueIsOracleFailure) {
  EXPECT_THROW(fd_gradient([](const Vector& x) { return x[0] > 0 ? INFINITY : 0.0; }, Vector::Zero(1), 1e-5),
               OracleFailure);
  EXPECT_THROW(fd_gradient([](const Vector&) { return 0.0; }, Vector::Zero(1), 0.0), ContractViolation);
}
