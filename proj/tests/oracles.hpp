#pragma once

// Reference computations used only by the tests. Each is deliberately naive
// and shares no code with the library routines it checks.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Classical RK4 on x' = A x + B u with step doubling; the step is halved
// until two consecutive refinements agree to `tol`.
inline VectorXd rk4_fixed(const MatrixXd& a, const MatrixXd& b, const VectorXd& x0,
                          const VectorXd& u, double t, int steps) {
  VectorXd x = x0;
  const double h = t / steps;
  const VectorXd bu = b * u;
  auto f = [&](const VectorXd& s) -> VectorXd { return a * s + bu; };
  for (int i = 0; i < steps; ++i) {
    VectorXd k1 = f(x);
    VectorXd k2 = f(x + 0.5 * h * k1);
    VectorXd k3 = f(x + 0.5 * h * k2);
    VectorXd k4 = f(x + h * k3);
    x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

inline VectorXd rk4_adaptive(const MatrixXd& a, const MatrixXd& b, const VectorXd& x0,
                             const VectorXd& u, double t, double tol = 1e-12) {
  if (t == 0.0) return x0;
  int steps = 16;
  VectorXd prev = rk4_fixed(a, b, x0, u, t, steps);
  for (int k = 0; k < 14; ++k) {
    steps *= 2;
    VectorXd next = rk4_fixed(a, b, x0, u, t, steps);
    // Richardson extrapolation for the fourth-order scheme.
    VectorXd extrap = next + (next - prev) / 15.0;
    if ((next - prev).lpNorm<Eigen::Infinity>() <= tol * (1.0 + next.lpNorm<Eigen::Infinity>())) {
      return extrap;
    }
    prev = next;
  }
  return prev;
}

// Minimum of f over [0, tau] at `samples` equally spaced points.
inline std::pair<double, double> dense_min(const std::function<double(double)>& f, double tau,
                                           int samples = 10000) {
  double best = f(0.0);
  double arg = 0.0;
  for (int i = 1; i <= samples; ++i) {
    const double t = tau * i / samples;
    const double v = f(t);
    if (v < best) {
      best = v;
      arg = t;
    }
  }
  return {best, arg};
}

// Dense minimum refined by golden-section search around the best sample.
inline double refined_min(const std::function<double(double)>& f, double tau,
                          int samples = 10000) {
  auto [best, arg] = dense_min(f, tau, samples);
  const double h = tau / samples;
  double lo = std::max(0.0, arg - h);
  double hi = std::min(tau, arg + h);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - g * (hi - lo);
  double d = lo + g * (hi - lo);
  for (int i = 0; i < 100; ++i) {
    if (f(c) < f(d)) {
      hi = d;
    } else {
      lo = c;
    }
    c = hi - g * (hi - lo);
    d = lo + g * (hi - lo);
  }
  return std::min(best, f(0.5 * (lo + hi)));
}

// Coefficients of prod (s - p_i), highest power first.
inline std::vector<double> poly_from_roots(const std::vector<double>& roots) {
  std::vector<double> c{1.0};
  for (double r : roots) {
    std::vector<double> n(c.size() + 1, 0.0);
    for (size_t i = 0; i < c.size(); ++i) {
      n[i] += c[i];
      n[i + 1] -= r * c[i];
    }
    c = n;
  }
  return c;
}

}  // namespace oracle
