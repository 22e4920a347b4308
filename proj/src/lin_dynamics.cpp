#include "ctstl/lin_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <unsupported/Eigen/MatrixFunctions>

#include "ctstl/errors.hpp"

namespace ctstl {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

// Eigenvalues closer than this (times the matrix scale) are treated as one
// cluster; a perturbed size-3 Jordan block spreads by about eps^(1/3).
constexpr double kClusterTol = 2e-5;
constexpr double kImagTol = 1e-8;
constexpr double kReconstructionTol = 1e-8;

struct Cluster {
  double lambda;
  int multiplicity;
};

std::vector<Cluster> cluster_eigenvalues(std::vector<std::complex<double>> eig,
                                         double scale) {
  std::sort(eig.begin(), eig.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  std::vector<std::vector<std::complex<double>>> groups;
  for (const auto& e : eig) {
    if (!groups.empty() &&
        std::abs(groups.back().back() - e) <= kClusterTol * scale) {
      groups.back().push_back(e);
    } else {
      groups.push_back({e});
    }
  }
  std::vector<Cluster> out;
  for (const auto& g : groups) {
    std::complex<double> mean = 0.0;
    for (const auto& e : g) mean += e;
    mean /= static_cast<double>(g.size());
    if (std::abs(mean.imag()) > kImagTol * scale) {
      throw ComplexModesUnsupported(
          "eigenvalue " + std::to_string(mean.real()) + (mean.imag() < 0 ? "-" : "+") +
          std::to_string(std::abs(mean.imag())) +
          "i is complex; window bounds need a real spectrum");
    }
    double lambda = mean.real();
    if (std::abs(lambda) <= 1e-13 * scale) lambda = 0.0;
    out.push_back({lambda, static_cast<int>(g.size())});
  }
  return out;
}

int nullity(const Matrix& m, double threshold) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  int count = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) <= threshold) ++count;
  }
  return count;
}

// Jordan block sizes of A at `lambda` from the nullities of (A - lambda I)^k.
std::vector<int> jordan_sizes(const Matrix& a, double lambda, int multiplicity,
                              double scale) {
  const int n = static_cast<int>(a.rows());
  const Matrix shifted = a - lambda * Matrix::Identity(n, n);
  std::vector<int> nul(multiplicity + 2, 0);
  Matrix power = Matrix::Identity(n, n);
  for (int k = 1; k <= multiplicity + 1; ++k) {
    power = power * shifted;
    nul[k] = nullity(power, 1e-7 * std::pow(scale, k));
  }
  if (nul[multiplicity] != multiplicity) return {multiplicity};
  // at_least[k] = number of blocks of size >= k
  std::vector<int> sizes;
  for (int k = 1; k <= multiplicity; ++k) {
    const int at_least = nul[k] - nul[k - 1];
    const int at_least_next = nul[k + 1] - nul[k];
    for (int b = 0; b < at_least - std::max(at_least_next, 0); ++b) sizes.push_back(k);
  }
  int total = 0;
  for (int s : sizes) total += s;
  if (total != multiplicity) return {multiplicity};
  std::sort(sizes.rbegin(), sizes.rend());
  return sizes;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

LinearSystem::LinearSystem(Matrix a, Matrix b, Matrix c)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
  if (a_.rows() == 0 || a_.rows() != a_.cols()) {
    throw InvalidSystem("A must be a non-empty square matrix");
  }
  if (b_.rows() != a_.rows()) {
    throw InvalidSystem("B must have as many rows as A");
  }
  if (c_.size() == 0) c_ = Matrix::Identity(a_.rows(), a_.rows());
  if (c_.cols() != a_.rows()) {
    throw InvalidSystem("every C row must have length n");
  }
  if (!all_finite(a_) || !all_finite(b_) || !all_finite(c_)) {
    throw InvalidSystem("system matrices contain non-finite entries");
  }
}

StepMatrices step_matrices(const LinearSystem& sys, double dt) {
  const int n = sys.states();
  const int m = sys.inputs();
  if (!std::isfinite(dt) || dt < 0.0) {
    throw InvalidSystem("step length must be finite and non-negative");
  }
  if (dt == 0.0) return {Matrix::Identity(n, n), Matrix::Zero(n, m)};
  Matrix aug = Matrix::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = sys.a() * dt;
  aug.topRightCorner(n, m) = sys.b() * dt;
  const Matrix e = aug.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

TimeGrid TimeGrid::uniform(double t_final, int intervals) {
  if (!(t_final > 0.0) || intervals < 1) {
    throw InvalidGrid("uniform grid needs t_f > 0 and at least one interval");
  }
  std::vector<double> nodes(intervals + 1);
  for (int k = 0; k <= intervals; ++k) {
    nodes[k] = t_final * static_cast<double>(k) / static_cast<double>(intervals);
  }
  nodes.back() = t_final;
  return TimeGrid(std::move(nodes), std::vector<bool>(intervals + 1, false));
}

TimeGrid::TimeGrid(std::vector<double> nodes, std::vector<bool> virtual_flags)
    : nodes_(std::move(nodes)), virtual_(std::move(virtual_flags)) {
  if (nodes_.size() < 2) throw InvalidGrid("a grid needs at least two nodes");
  if (virtual_.size() != nodes_.size()) {
    throw InvalidGrid("virtual flag count must match node count");
  }
  if (nodes_.front() != 0.0) throw InvalidGrid("grid must start at t = 0");
  for (std::size_t k = 1; k < nodes_.size(); ++k) {
    if (!(nodes_[k] > nodes_[k - 1]) || !std::isfinite(nodes_[k])) {
      throw InvalidGrid("grid nodes must be strictly increasing");
    }
  }
  if (virtual_.front() || virtual_.back()) {
    throw InvalidGrid("first and last nodes must be real samples");
  }
}

std::optional<int> TimeGrid::index_of(double t, double tol) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
  if (it != nodes_.end() && std::abs(*it - t) <= tol) {
    return static_cast<int>(it - nodes_.begin());
  }
  return std::nullopt;
}

int TimeGrid::interval_containing(double t) const {
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  int k = static_cast<int>(it - nodes_.begin()) - 1;
  return std::clamp(k, 0, intervals() - 1);
}

double ModeDecomposition::evaluate(const Vector& x0, const Vector& u0,
                                   double t) const {
  double value = sigma;
  for (const auto& term : terms) {
    const double coef = term.state_coeff.dot(x0) +
                        (term.input_coeff.size() ? term.input_coeff.dot(u0) : 0.0);
    value += coef * std::exp(term.lambda * t) * std::pow(t, term.power);
  }
  return value;
}

ModeDecomposition mode_decompose(const LinearSystem& sys, const RowVector& row,
                                 double offset, const RowVector& input_row) {
  const int n = sys.states();
  const int m = sys.inputs();
  if (row.size() != n) throw InvalidSystem("predicate row must have length n");
  RowVector d = input_row.size() ? input_row : RowVector(RowVector::Zero(m));
  if (d.size() != m) throw InvalidSystem("input row must have length m");
  if (!row.allFinite() || !d.allFinite() || !std::isfinite(offset)) {
    throw InvalidSystem("predicate contains non-finite entries");
  }

  const Matrix& a = sys.a();
  const double scale = std::max(1.0, a.lpNorm<Eigen::Infinity>());

  Eigen::EigenSolver<Matrix> solver(a, false);
  std::vector<std::complex<double>> eig(solver.eigenvalues().data(),
                                        solver.eigenvalues().data() + n);
  const std::vector<Cluster> state_clusters = cluster_eigenvalues(eig, scale);

  ModeDecomposition out;
  out.sigma = offset;
  for (const auto& c : state_clusters) {
    for (int s : jordan_sizes(a, c.lambda, c.multiplicity, scale)) {
      out.blocks.push_back({c.lambda, s});
    }
  }

  // The held input is an extra state with zero dynamics, so the forced
  // response lives on the spectrum of [[A, B], [0, 0]]: the state clusters
  // plus m zero eigenvalues.
  const int dim = n + m;
  Matrix aug = Matrix::Zero(dim, dim);
  aug.topLeftCorner(n, n) = a;
  aug.topRightCorner(n, m) = sys.b();
  for (int i = 0; i < m; ++i) eig.emplace_back(0.0, 0.0);
  const std::vector<Cluster> clusters = cluster_eigenvalues(eig, scale);

  // Confluent Vandermonde system: the k-th derivative at t = 0 of
  //   sum_{c,j} a_{c,j} e^{lambda_c t} t^j / j!
  // must equal q A_aug^k.
  Matrix vander = Matrix::Zero(dim, dim);
  Matrix rhs(dim, dim);
  RowVector q(dim);
  q << row, d;
  RowVector qk = q;
  for (int k = 0; k < dim; ++k) {
    rhs.row(k) = qk;
    qk = qk * aug;
    int col = 0;
    for (const auto& c : clusters) {
      for (int j = 0; j < c.multiplicity; ++j, ++col) {
        if (k >= j) vander(k, col) = binomial(k, j) * std::pow(c.lambda, k - j);
      }
    }
  }
  Eigen::FullPivLU<Matrix> lu(vander);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) {
    throw DecompositionUnstable("modal basis is numerically singular");
  }
  const Matrix coeff = lu.solve(rhs);

  const double coeff_scale = std::max(1e-300, coeff.lpNorm<Eigen::Infinity>());
  int col = 0;
  double factorial = 1.0;
  for (const auto& c : clusters) {
    factorial = 1.0;
    for (int j = 0; j < c.multiplicity; ++j, ++col) {
      if (j > 0) factorial *= j;
      RowVector r = coeff.row(col) / factorial;
      if (r.lpNorm<Eigen::Infinity>() <= 1e-15 * coeff_scale) continue;
      out.terms.push_back({c.lambda, j, r.head(n), r.tail(m)});
    }
  }

  // Verify against the exact exponential; this is what rejects clusters that
  // merged distinct modes too coarsely.
  for (double t : {0.1, 0.5, 1.0, 2.0}) {
    const RowVector exact = q * (aug * t).exp();
    RowVector approx = RowVector::Zero(dim);
    double magnitude = exact.lpNorm<Eigen::Infinity>();
    for (const auto& term : out.terms) {
      const double basis = std::exp(term.lambda * t) * std::pow(t, term.power);
      RowVector r(dim);
      r << term.state_coeff, term.input_coeff;
      approx += basis * r;
      magnitude = std::max(magnitude, std::abs(basis) * r.lpNorm<Eigen::Infinity>());
    }
    if ((approx - exact).lpNorm<Eigen::Infinity>() >
        kReconstructionTol * std::max(1.0, magnitude)) {
      throw DecompositionUnstable(
          "modal expansion does not reproduce the trajectory (near-defective "
          "eigenstructure)");
    }
  }
  return out;
}

Interpolant::Interpolant(std::shared_ptr<const LinearSystem> sys, double t_start,
                         double t_end, Vector x_start, Vector u)
    : sys_(std::move(sys)),
      t_start_(t_start),
      t_end_(t_end),
      x_start_(std::move(x_start)),
      u_(std::move(u)) {
  if (!sys_) throw InvalidSystem("interpolant needs a system");
  if (!(t_end_ > t_start_)) throw InvalidGrid("interpolant window must be non-empty");
  if (x_start_.size() != sys_->states() || u_.size() != sys_->inputs()) {
    throw InvalidSystem("interpolant state/input dimension mismatch");
  }
}

Vector Interpolant::at(double t) const {
  constexpr double slack = 1e-12;
  if (t < t_start_ - slack || t > t_end_ + slack) {
    throw OutOfWindow("t = " + std::to_string(t) + " outside [" +
                      std::to_string(t_start_) + ", " + std::to_string(t_end_) + "]");
  }
  const double dt = std::clamp(t - t_start_, 0.0, t_end_ - t_start_);
  if (dt == 0.0) return x_start_;
  const StepMatrices s = step_matrices(*sys_, dt);
  return s.ad * x_start_ + s.bd * u_;
}

}  // namespace ctstl
