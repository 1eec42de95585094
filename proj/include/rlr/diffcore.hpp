#pragma once

// Differentiable building blocks: the shared backbone map, its exact
// vector-Jacobian products, reward functions and a central-difference oracle.
//
// Parameter layout (ParamVector) is fixed: for every layer, the weight matrix
// row-major followed by the bias, layers in forward order.
//   linear-affine : W (d x in), b (d)
//   mlp-tanh      : W1 (m x in), b1 (m), W2 (d x m), b2 (d)
// where in = d + 1 when time conditioning appends t/T to the input.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Core>

#include "rlr/errors.hpp"
#include "rlr/rng.hpp"

namespace rlr {

using Vector = Eigen::VectorXd;
using ParamVector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class BackboneKind : std::uint8_t { LinearAffine = 1, MlpTanh = 2 };

inline std::string_view to_string(BackboneKind k) {
  return k == BackboneKind::LinearAffine ? "linear-affine" : "mlp-tanh";
}

struct Backbone {
  BackboneKind kind = BackboneKind::LinearAffine;
  int latent_dim = 1;
  int hidden_dim = 0;  // mlp only
  bool time_conditioning = false;
  int horizon = 1;     // T, divides the step index when time conditioning is on

  int input_dim() const { return latent_dim + (time_conditioning ? 1 : 0); }

  Eigen::Index param_count() const {
    const Eigen::Index d = latent_dim, in = input_dim(), m = hidden_dim;
    if (kind == BackboneKind::LinearAffine) return d * in + d;
    return m * in + m + d * m + d;
  }

  void validate() const {
    if (latent_dim <= 0) throw ContractViolation("backbone: latent_dim must be positive");
    if (kind == BackboneKind::MlpTanh && hidden_dim <= 0)
      throw ContractViolation("backbone: mlp-tanh needs hidden_dim > 0");
    if (horizon <= 0) throw ContractViolation("backbone: horizon must be positive");
  }

  static Backbone linear(int d, bool time_conditioning = false, int horizon = 1) {
    return Backbone{BackboneKind::LinearAffine, d, 0, time_conditioning, horizon};
  }
  static Backbone mlp(int d, int m, bool time_conditioning = false, int horizon = 1) {
    return Backbone{BackboneKind::MlpTanh, d, m, time_conditioning, horizon};
  }
};

/// Result of a combined reverse pass through one backbone application.
struct BackboneVjp {
  Vector dx;
  ParamVector dtheta;
};

namespace detail {

inline void check_dims(const Backbone& bb, const ParamVector& params, const Vector& x) {
  if (params.size() != bb.param_count())
    throw ContractViolation("backbone: parameter vector has size " +
                            std::to_string(params.size()) + ", expected " +
                            std::to_string(bb.param_count()));
  if (x.size() != bb.latent_dim)
    throw ContractViolation("backbone: latent has dimension " + std::to_string(x.size()) +
                            ", expected " + std::to_string(bb.latent_dim));
}

inline Vector backbone_input(const Backbone& bb, const Vector& x, int t) {
  if (!bb.time_conditioning) return x;
  Vector u(bb.input_dim());
  u.head(bb.latent_dim) = x;
  u[bb.latent_dim] = static_cast<double>(t) / static_cast<double>(bb.horizon);
  return u;
}

struct MlpView {
  Eigen::Map<const RowMajorMatrix> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const RowMajorMatrix> w2;
  Eigen::Map<const Vector> b2;

  MlpView(const Backbone& bb, const ParamVector& p)
      : w1(p.data(), bb.hidden_dim, bb.input_dim()),
        b1(p.data() + bb.hidden_dim * bb.input_dim(), bb.hidden_dim),
        w2(p.data() + bb.hidden_dim * (bb.input_dim() + 1), bb.latent_dim, bb.hidden_dim),
        b2(p.data() + bb.hidden_dim * (bb.input_dim() + 1) + bb.latent_dim * bb.hidden_dim,
           bb.latent_dim) {}
};

struct LinearView {
  Eigen::Map<const RowMajorMatrix> w;
  Eigen::Map<const Vector> b;

  LinearView(const Backbone& bb, const ParamVector& p)
      : w(p.data(), bb.latent_dim, bb.input_dim()),
        b(p.data() + bb.latent_dim * bb.input_dim(), bb.latent_dim) {}
};

}  // namespace detail

/// phi(x; theta) for step t. No noise is applied here.
inline Vector backbone_forward(const Backbone& bb, const ParamVector& params, const Vector& x,
                               int t) {
  detail::check_dims(bb, params, x);
  const Vector u = detail::backbone_input(bb, x, t);
  if (bb.kind == BackboneKind::LinearAffine) {
    const detail::LinearView v(bb, params);
    return v.w * u + v.b;
  }
  const detail::MlpView v(bb, params);
  const Vector hid = (v.w1 * u + v.b1).array().tanh().matrix();
  return v.w2 * hid + v.b2;
}

/// Both cotangents v^T dphi/dx and v^T dphi/dtheta from a single pass.
inline BackboneVjp backbone_vjp(const Backbone& bb, const ParamVector& params, const Vector& x,
                                int t, const Vector& v) {
  detail::check_dims(bb, params, x);
  if (v.size() != bb.latent_dim) throw ContractViolation("backbone: cotangent dimension mismatch");
  const Vector u = detail::backbone_input(bb, x, t);
  const Eigen::Index d = bb.latent_dim, in = bb.input_dim();
  BackboneVjp out{Vector(d), ParamVector(bb.param_count())};

  if (bb.kind == BackboneKind::LinearAffine) {
    const detail::LinearView lin(bb, params);
    out.dx = (lin.w.transpose() * v).head(d);
    Eigen::Map<RowMajorMatrix>(out.dtheta.data(), d, in) = v * u.transpose();
    out.dtheta.segment(d * in, d) = v;
    return out;
  }

  const Eigen::Index m = bb.hidden_dim;
  const detail::MlpView mlp(bb, params);
  const Vector hid = (mlp.w1 * u + mlp.b1).array().tanh().matrix();
  const Vector g = ((mlp.w2.transpose() * v).array() * (1.0 - hid.array().square())).matrix();
  out.dx = (mlp.w1.transpose() * g).head(d);

  double* p = out.dtheta.data();
  Eigen::Map<RowMajorMatrix>(p, m, in) = g * u.transpose();
  p += m * in;
  Eigen::Map<Vector>(p, m) = g;
  p += m;
  Eigen::Map<RowMajorMatrix>(p, d, m) = v * hid.transpose();
  p += d * m;
  Eigen::Map<Vector>(p, d) = v;
  return out;
}

inline Vector backbone_vjp_x(const Backbone& bb, const ParamVector& params, const Vector& x, int t,
                             const Vector& v) {
  return backbone_vjp(bb, params, x, t, v).dx;
}

inline ParamVector backbone_vjp_theta(const Backbone& bb, const ParamVector& params,
                                      const Vector& x, int t, const Vector& v) {
  return backbone_vjp(bb, params, x, t, v).dtheta;
}

/// Gaussian initialisation: weights ~ N(0, scale^2 / fan_in), biases ~ N(0, (0.1 scale)^2).
inline ParamVector init_params(const Backbone& bb, std::uint64_t seed, double scale = 1.0) {
  bb.validate();
  Engine eng = make_engine(seed, 0, stream::kInit);
  std::normal_distribution<double> unit(0.0, 1.0);
  ParamVector p(bb.param_count());
  Eigen::Index k = 0;
  auto fill = [&](Eigen::Index count, double sd) {
    for (Eigen::Index i = 0; i < count; ++i) p[k++] = sd * unit(eng);
  };
  const Eigen::Index d = bb.latent_dim, in = bb.input_dim(), m = bb.hidden_dim;
  if (bb.kind == BackboneKind::LinearAffine) {
    fill(d * in, scale / std::sqrt(double(in)));
    fill(d, 0.1 * scale);
  } else {
    fill(m * in, scale / std::sqrt(double(in)));
    fill(m, 0.1 * scale);
    fill(d * m, scale / std::sqrt(double(m)));
    fill(d, 0.1 * scale);
  }
  return p;
}

/// Linear backbone with W = [gain I | 0] and zero bias, so each step starts
/// as a scaled copy of its input.
inline ParamVector identity_params(const Backbone& bb, double gain = 1.0) {
  bb.validate();
  if (bb.kind != BackboneKind::LinearAffine)
    throw ContractViolation("identity_params: needs a linear backbone");
  ParamVector p = ParamVector::Zero(bb.param_count());
  const int in = bb.input_dim();
  for (int r = 0; r < bb.latent_dim; ++r) p[r * in + r] = gain;
  return p;
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

/// R(x) = -||x - target||^2
struct NegQuadratic {
  Vector target;
};

/// R(x, y) = -[(a - x)^2 + b (y - x^2)^2]
struct Rosenbrock2d {
  double a = 1.0;
  double b = 100.0;
};

/// R(x) = w^T tanh(A x + c), weights drawn from `seed`.
struct RandomMlpScore {
  std::uint64_t seed = 0;
  int dim = 2;
  int hidden = 16;
  RowMajorMatrix a;
  Vector c;
  Vector w;

  static RandomMlpScore make(std::uint64_t seed, int dim, int hidden = 16) {
    RandomMlpScore r{seed, dim, hidden, RowMajorMatrix(hidden, dim), Vector(hidden), Vector(hidden)};
    Engine eng = make_engine(seed, 1, stream::kInit);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < r.a.size(); ++i) r.a.data()[i] = unit(eng) / std::sqrt(double(dim));
    for (Eigen::Index i = 0; i < hidden; ++i) r.c[i] = 0.5 * unit(eng);
    for (Eigen::Index i = 0; i < hidden; ++i) r.w[i] = unit(eng) / std::sqrt(double(hidden));
    return r;
  }
};

class RewardFn {
 public:
  using Variant = std::variant<NegQuadratic, Rosenbrock2d, RandomMlpScore>;

  RewardFn() : impl_(NegQuadratic{Vector::Zero(1)}) {}
  explicit RewardFn(Variant v) : impl_(std::move(v)) {}

  static RewardFn neg_quadratic(Vector target) { return RewardFn(NegQuadratic{std::move(target)}); }
  static RewardFn rosenbrock() { return RewardFn(Rosenbrock2d{}); }
  static RewardFn random_mlp(std::uint64_t seed, int dim) {
    return RewardFn(RandomMlpScore::make(seed, dim));
  }

  std::string_view name() const {
    switch (impl_.index()) {
      case 0: return "neg-quadratic";
      case 1: return "rosenbrock-2d";
      default: return "random-mlp-score";
    }
  }

  /// Input dimension the reward accepts.
  int dim() const {
    return std::visit(
        [](const auto& r) -> int {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, NegQuadratic>) return int(r.target.size());
          else if constexpr (std::is_same_v<R, Rosenbrock2d>) return 2;
          else return r.dim;
        },
        impl_);
  }

  const Variant& variant() const { return impl_; }

  double value(const Vector& x) const {
    check(x);
    return std::visit(
        [&](const auto& r) -> double {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, NegQuadratic>) {
            return -(x - r.target).squaredNorm();
          } else if constexpr (std::is_same_v<R, Rosenbrock2d>) {
            const double u = r.a - x[0], w = x[1] - x[0] * x[0];
            return -(u * u + r.b * w * w);
          } else {
            return r.w.dot((r.a * x + r.c).array().tanh().matrix());
          }
        },
        impl_);
  }

  Vector grad(const Vector& x) const {
    check(x);
    return std::visit(
        [&](const auto& r) -> Vector {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, NegQuadratic>) {
            return -2.0 * (x - r.target);
          } else if constexpr (std::is_same_v<R, Rosenbrock2d>) {
            const double w = x[1] - x[0] * x[0];
            Vector g(2);
            g[0] = 2.0 * (r.a - x[0]) + 4.0 * r.b * x[0] * w;
            g[1] = -2.0 * r.b * w;
            return g;
          } else {
            const Vector h = (r.a * x + r.c).array().tanh().matrix();
            const Vector s = (r.w.array() * (1.0 - h.array().square())).matrix();
            return r.a.transpose() * s;
          }
        },
        impl_);
  }

 private:
  void check(const Vector& x) const {
    if (x.size() != dim())
      throw ContractViolation("reward " + std::string(name()) + ": input dimension " +
                              std::to_string(x.size()) + ", expected " + std::to_string(dim()));
  }

  Variant impl_;
};

inline double reward_value(const RewardFn& r, const Vector& x0) { return r.value(x0); }
inline Vector reward_grad(const RewardFn& r, const Vector& x0) { return r.grad(x0); }

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h per coordinate.
template <class Fn>
Vector fd_gradient(Fn&& fn, const Vector& point, double step) {
  if (!(step > 0.0)) throw ContractViolation("fd_gradient: step must be positive");
  Vector g(point.size());
  Vector probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double fp = fn(static_cast<const Vector&>(probe));
    probe[i] = point[i] - step;
    const double fm = fn(static_cast<const Vector&>(probe));
    probe[i] = point[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw OracleFailure("fd_gradient: non-finite function value at coordinate " +
                          std::to_string(i));
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// max|a - b| / max(max|b|, floor): the max-norm relative error used by all
/// gradient checks.
inline double max_rel_error(const Vector& a, const Vector& b, double floor = 1e-12) {
  const double denom = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / denom;
}

}  // namespace rlr
