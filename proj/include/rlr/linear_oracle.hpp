#pragma once

// Closed forms for the scalar linear-Gaussian chain
//   x_{t-1} = w x_t + b + z_t,  z_t ~ N(0, s_t^2),  x_T = c fixed,
// with R(x_0) = -(x_0 - x*)^2 and parameters ordered (w, b).

#include <cmath>
#include <vector>

#include <Eigen/Core>

namespace rlr::oracle {

struct ScalarLinearChain {
  int T;
  double w, b, c, target;
  std::vector<double> sigma;  // sigma[t-1] for step t

  /// Forward pass from explicit noises z[t-1]; returns x_0..x_T.
  std::vector<double> latents(const std::vector<double>& z) const {
    std::vector<double> x(static_cast<std::size_t>(T) + 1);
    x[T] = c;
    for (int t = T; t >= 1; --t) x[t - 1] = w * x[t] + b + z[t - 1];
    return x;
  }

  /// Contribution of step i to the pathwise gradient: w^{i-1} (x_i, 1) dR/dx_0.
  Eigen::Vector2d contribution(const std::vector<double>& x, int i) const {
    const double g = -2.0 * (x[0] - target) * std::pow(w, i - 1);
    return {g * x[i], g};
  }

  /// Sum of contributions over steps lo..hi on one realization.
  Eigen::Vector2d contributions(const std::vector<double>& z, int lo, int hi) const {
    const auto x = latents(z);
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for (int i = lo; i <= hi; ++i) s += contribution(x, i);
    return s;
  }

  double mean(int t) const {
    double m = c;
    for (int s = T; s > t; --s) m = w * m + b;
    return m;
  }

  /// Cov(x_i, x_0) = sum_{s>i} w^{s-i-1} w^{s-1} s_s^2.
  double cov_with_x0(int i) const {
    double acc = 0.0;
    for (int s = i + 1; s <= T; ++s)
      acc += std::pow(w, s - i - 1) * std::pow(w, s - 1) * sigma[s - 1] * sigma[s - 1];
    return acc;
  }

  /// E[sum_{i=lo}^{hi} contribution_i].
  Eigen::Vector2d expected_contributions(int lo, int hi) const {
    const double m0 = mean(0);
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for (int i = lo; i <= hi; ++i) {
      const double k = -2.0 * std::pow(w, i - 1);
      const double exi_x0 = mean(i) * m0 + cov_with_x0(i);
      s[0] += k * (exi_x0 - target * mean(i));
      s[1] += k * (m0 - target);
    }
    return s;
  }
};

}  // namespace rlr::oracle
