#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

namespace ctstl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Continuous-time plant  x' = A x + B u,  y = C x.
class LinearSystem {
 public:
  /// Throws InvalidSystem on shape mismatch or non-finite entries. An empty
  /// `c` defaults to the identity (every state is an output).
  LinearSystem(Matrix a, Matrix b, Matrix c = Matrix());

  const Matrix& a() const noexcept { return a_; }
  const Matrix& b() const noexcept { return b_; }
  const Matrix& c() const noexcept { return c_; }
  int states() const noexcept { return static_cast<int>(a_.rows()); }
  int inputs() const noexcept { return static_cast<int>(b_.cols()); }

 private:
  Matrix a_;
  Matrix b_;
  Matrix c_;
};

/// Zero-order-hold transition over `dt`: x(dt) = ad x(0) + bd u.
struct StepMatrices {
  Matrix ad;
  Matrix bd;
};

/// Exact ZOH discretization. Both blocks come out of a single exponential of
/// the augmented matrix [[A, B], [0, 0]] * dt, so singular A needs no special
/// case. dt == 0 returns (I, 0) exactly.
StepMatrices step_matrices(const LinearSystem& sys, double dt);

/// Strictly increasing control-update instants starting at 0. Nodes flagged
/// virtual were inserted to align formula endpoints; they carry a control
/// that is tied to the preceding real node.
class TimeGrid {
 public:
  static TimeGrid uniform(double t_final, int intervals);

  TimeGrid(std::vector<double> nodes, std::vector<bool> virtual_flags);

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<bool>& virtual_flags() const noexcept { return virtual_; }
  int size() const noexcept { return static_cast<int>(nodes_.size()); }
  int intervals() const noexcept { return size() - 1; }
  double time(int k) const { return nodes_.at(k); }
  double interval_length(int k) const { return nodes_.at(k + 1) - nodes_.at(k); }
  double t_final() const noexcept { return nodes_.back(); }
  bool is_virtual(int k) const { return virtual_.at(k); }

  /// Node index within `tol` of `t`, if any.
  std::optional<int> index_of(double t, double tol = 1e-9) const;
  /// Index of the interval [t_k, t_{k+1}) containing t (the last interval is
  /// closed on the right).
  int interval_containing(double t) const;

 private:
  std::vector<double> nodes_;
  std::vector<bool> virtual_;
};

struct JordanBlock {
  double eigenvalue;
  int size;
};

/// One basis function  e^{lambda t} t^power  of a scalar output expansion,
/// with its coefficient split into a state part and an input part.
struct ModeTerm {
  double lambda;
  int power;
  RowVector state_coeff;
  RowVector input_coeff;
};

/// Expansion of  q(t) = row x(t) + input_row u + offset  along the ZOH
/// trajectory started at (x0, u0):
///   q(t) = sigma + sum_terms (state_coeff x0 + input_coeff u0) e^{lambda t} t^power
struct ModeDecomposition {
  std::vector<JordanBlock> blocks;
  std::vector<ModeTerm> terms;
  double sigma = 0.0;

  double evaluate(const Vector& x0, const Vector& u0, double t) const;
};

/// Modal expansion of a linear output along the closed-form trajectory.
/// Requires a real spectrum: throws ComplexModesUnsupported for complex
/// eigenvalues and DecompositionUnstable when the recovered structure does
/// not reproduce the exact trajectory to 1e-8 relative.
ModeDecomposition mode_decompose(const LinearSystem& sys, const RowVector& row,
                                 double offset,
                                 const RowVector& input_row = RowVector());

/// Closed-form state on one hold window [t_start, t_end].
class Interpolant {
 public:
  Interpolant(std::shared_ptr<const LinearSystem> sys, double t_start,
              double t_end, Vector x_start, Vector u);

  /// Throws OutOfWindow when t lies outside the window (1e-12 slack).
  Vector at(double t) const;

  double t_start() const noexcept { return t_start_; }
  double t_end() const noexcept { return t_end_; }
  const Vector& x_start() const noexcept { return x_start_; }
  const Vector& u() const noexcept { return u_; }
  const LinearSystem& system() const noexcept { return *sys_; }
  const std::shared_ptr<const LinearSystem>& system_ptr() const noexcept {
    return sys_;
  }

 private:
  std::shared_ptr<const LinearSystem> sys_;
  double t_start_;
  double t_end_;
  Vector x_start_;
  Vector u_;
};

}  // namespace ctstl
