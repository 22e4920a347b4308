// Primal-dual interior-point solver for the convex QP relaxations.
//
//   min 1/2 x'Qx + c'x   s.t.  E x = e,  G x + s = g,  s >= 0
//
// Mehrotra predictor-corrector on the quasidefinite system
//   [ Q + rho I   E'        G'             ] [dx]   [rx]
//   [ E           -delta I  0              ] [dy] = [ry]
//   [ G           0         -S/Z - delta I ] [dz]   [rz]
// factored by a sparse LDL' whose pattern is analyzed once per solve.
// Regularization is removed by iterative refinement.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>

#include "ctstl/errors.hpp"
#include "ctstl/miqp.hpp"

namespace ctstl {

namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using SpRowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Row = std::vector<std::pair<int, double>>;

constexpr double kFixTol = 1e-12;
constexpr double kPhaseOneTol = 1e-5;

struct StandardQp {
  int n = 0;
  std::vector<Eigen::Triplet<double>> q;  // full symmetric
  Vec c;
  double constant = 0.0;
  std::vector<Row> eq;
  std::vector<double> e;
  std::vector<Row> in;  // G x <= g
  std::vector<double> g;
};

struct Presolved {
  StandardQp qp;
  std::vector<int> column;        // model column -> reduced column, -1 if fixed
  std::vector<double> fixed_value;
  std::optional<std::string> infeasible;
};

Presolved presolve(const MiqpModel& model, const std::vector<double>& lower,
                   const std::vector<double>& upper) {
  Presolved out;
  const int nv = model.num_variables();
  out.column.assign(nv, -1);
  out.fixed_value.assign(nv, 0.0);
  std::vector<double> lo(nv), hi(nv);
  for (int i = 0; i < nv; ++i) {
    lo[i] = lower[i];
    hi[i] = upper[i];
    if (model.variables()[i].binary) {
      lo[i] = std::max(lo[i], 0.0);
      hi[i] = std::min(hi[i], 1.0);
    }
    if (lo[i] > hi[i] + kFixTol) {
      out.infeasible = "empty bounds on " + model.variables()[i].name;
      return out;
    }
    if (hi[i] - lo[i] <= kFixTol) {
      out.fixed_value[i] = lo[i];
    } else {
      out.column[i] = out.qp.n++;
    }
  }
  StandardQp& qp = out.qp;
  qp.c = Vec::Zero(qp.n);
  for (const auto& t : model.quadratic()) {
    const int a = out.column[t.i];
    const int b = out.column[t.j];
    if (a >= 0 && b >= 0) {
      if (a == b) {
        qp.q.emplace_back(a, a, 2.0 * t.coef);
      } else {
        qp.q.emplace_back(a, b, t.coef);
        qp.q.emplace_back(b, a, t.coef);
      }
    } else if (a >= 0) {
      qp.c(a) += t.coef * out.fixed_value[t.j];
    } else if (b >= 0) {
      qp.c(b) += t.coef * out.fixed_value[t.i];
    } else {
      qp.constant += t.coef * out.fixed_value[t.i] * out.fixed_value[t.j];
    }
  }
  for (int i = 0; i < nv; ++i) {
    const double l = model.linear()[i];
    if (l == 0.0) continue;
    if (out.column[i] >= 0) {
      qp.c(out.column[i]) += l;
    } else {
      qp.constant += l * out.fixed_value[i];
    }
  }
  for (const auto& r : model.constraints()) {
    Row row;
    double fixed = 0.0;
    double scale = 0.0;
    for (const auto& [col, coef] : r.terms) {
      if (out.column[col] >= 0) {
        row.emplace_back(out.column[col], coef);
        scale = std::max(scale, std::abs(coef));
      } else {
        fixed += coef * out.fixed_value[col];
      }
    }
    const double rhs = r.rhs - fixed;
    if (row.empty()) {
      const double tol = 1e-9 * (1.0 + std::abs(r.rhs) + std::abs(fixed));
      const bool ok = (r.sense == Sense::Le && rhs >= -tol) ||
                      (r.sense == Sense::Ge && rhs <= tol) ||
                      (r.sense == Sense::Eq && std::abs(rhs) <= tol);
      if (!ok) {
        out.infeasible = "row " + r.name + " is violated by the fixed columns";
        return out;
      }
      continue;
    }
    for (auto& t : row) t.second /= scale;
    if (r.sense == Sense::Eq) {
      qp.eq.push_back(std::move(row));
      qp.e.push_back(rhs / scale);
    } else if (r.sense == Sense::Le) {
      qp.in.push_back(std::move(row));
      qp.g.push_back(rhs / scale);
    } else {
      for (auto& t : row) t.second = -t.second;
      qp.in.push_back(std::move(row));
      qp.g.push_back(-rhs / scale);
    }
  }
  for (int i = 0; i < nv; ++i) {
    const int col = out.column[i];
    if (col < 0) continue;
    if (std::isfinite(lo[i])) {
      qp.in.push_back({{col, -1.0}});
      qp.g.push_back(-lo[i]);
    }
    if (std::isfinite(hi[i])) {
      qp.in.push_back({{col, 1.0}});
      qp.g.push_back(hi[i]);
    }
  }
  return out;
}

SpRowMat to_sparse(const std::vector<Row>& rows, int n) {
  std::vector<Eigen::Triplet<double>> t;
  for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
    for (const auto& [c, v] : rows[r]) t.emplace_back(r, c, v);
  }
  SpRowMat m(static_cast<int>(rows.size()), n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

double inf_norm(const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

enum class IpmStatus { Optimal, Infeasible, Failed };

struct IpmResult {
  IpmStatus status = IpmStatus::Failed;
  Vec x, y, z, s;
  int iterations = 0;
  double farkas_ratio = 0.0;
  double objective = 0.0;
  double merit = kInfinity;  // max of scaled residuals and gap at x
};

class InteriorPoint {
 public:
  InteriorPoint(const StandardQp& qp, const QpOptions& opt)
      : n_(qp.n),
        p_(static_cast<int>(qp.eq.size())),
        q_(static_cast<int>(qp.in.size())),
        opt_(opt) {
    q_mat_.resize(n_, n_);
    q_mat_.setFromTriplets(qp.q.begin(), qp.q.end());
    e_mat_ = to_sparse(qp.eq, n_);
    g_mat_ = to_sparse(qp.in, n_);
    c_ = qp.c;
    e_ = Eigen::Map<const Vec>(qp.e.data(), p_);
    g_ = Eigen::Map<const Vec>(qp.g.data(), q_);
    assemble_pattern(qp);
  }

  IpmResult run() {
    IpmResult res;
    Vec x(n_), y(p_), z(q_), s(q_);
    {
      // Least-squares start: min 1/2 x'Qx + c'x + 1/2 |Gx - g|^2 s.t. Ex = e.
      const Vec ones = Vec::Ones(q_);
      if (!factorize(ones, ones)) return res;
      Vec dz;
      solve(-c_, e_, g_, ones, ones, x, y, dz);
    }
    s = g_ - g_mat_ * x;
    for (int i = 0; i < q_; ++i) s(i) = std::max(s(i), 1.0);
    z.setOnes();
    y.setZero();

    const double e_scale = 1.0 + std::max(inf_norm(e_), inf_norm(g_));
    const double c_scale = 1.0 + inf_norm(c_);
    double best_merit = kInfinity;
    // Stalled runs still count as solved when the best iterate is close.
    auto stalled = [&] {
      if (best_merit <= kStallTol) res.status = IpmStatus::Optimal;
      res.merit = best_merit;
      return res;
    };

    for (int it = 0; it < opt_.max_iterations; ++it) {
      res.iterations = it + 1;
      const Vec qx = q_mat_ * x;
      const Vec rd = qx + c_ + e_mat_.transpose() * y + g_mat_.transpose() * z;
      const Vec re = e_mat_ * x - e_;
      const Vec rg = g_mat_ * x + s - g_;
      const double mu = q_ ? s.dot(z) / q_ : 0.0;
      const double pobj = 0.5 * x.dot(qx) + c_.dot(x);
      const double pres = std::max(inf_norm(re), inf_norm(rg)) / e_scale;
      const double dres = inf_norm(rd) / c_scale;
      const double gap = (q_ ? s.dot(z) : 0.0) / (1.0 + std::abs(pobj));
      const double merit = std::max({pres, dres, gap});
      if (merit < best_merit) {
        best_merit = merit;
        res.x = x;
        res.y = y;
        res.z = z;
        res.s = s;
        res.objective = pobj;
        res.merit = merit;
      }
      if (pres <= opt_.tolerance && dres <= opt_.tolerance && gap <= kGapTol) {
        res.status = IpmStatus::Optimal;
        return res;
      }
      // Farkas test: y, z >= 0 with E'y + G'z ~ 0 and e'y + g'z < 0. Any
      // feasible x has |x|_1 >= eta / |E'y + G'z|_inf, so a small ratio rules
      // out every point of practical size.
      const double eta = -(e_.dot(y) + g_.dot(z));
      if (it >= 3 && eta > 0.0) {
        const Vec ray = e_mat_.transpose() * y + g_mat_.transpose() * z;
        const double ratio = inf_norm(ray) / eta;
        if (ratio <= kFarkasTol) {
          res.status = IpmStatus::Infeasible;
          res.farkas_ratio = ratio;
          return res;
        }
      }
      if (!x.allFinite() || inf_norm(x) > 1e13 || !z.allFinite() || inf_norm(z) > 1e13) {
        return stalled();
      }
      if (!factorize(s, z)) return stalled();

      // Predictor.
      Vec rc = s.cwiseProduct(z);
      Vec dx, dy, dz, ds;
      direction(rd, re, rg, rc, s, z, dx, dy, dz, ds);
      const double alpha_aff = max_step(s, ds, z, dz);
      double sigma = 0.0;
      if (q_) {
        const double mu_aff =
            (s + alpha_aff * ds).dot(z + alpha_aff * dz) / static_cast<double>(q_);
        sigma = std::pow(std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0), 3);
      }
      // Corrector.
      rc = s.cwiseProduct(z) + ds.cwiseProduct(dz) - Vec::Constant(q_, sigma * mu);
      direction(rd, re, rg, rc, s, z, dx, dy, dz, ds);
      const double alpha = std::min(1.0, 0.99 * max_step(s, ds, z, dz));
      x += alpha * dx;
      y += alpha * dy;
      z += alpha * dz;
      s += alpha * ds;
    }
    return stalled();
  }

 private:
  // Quasidefinite KKT matrix, lower triangle, over the rows with two or more
  // columns; single-column rows are folded into the diagonal of the Q block:
  //   [ Q + rho I + sum a^2/d                  ]
  //   [ E          -delta I                    ]
  //   [ G_multi    0        -S/Z - delta I     ]
  void assemble_pattern(const StandardQp& qp) {
    slot_.assign(q_, -1);
    single_col_.assign(q_, -1);
    single_coef_.assign(q_, 0.0);
    int m = 0;
    for (int r = 0; r < q_; ++r) {
      if (qp.in[r].size() == 1) {
        single_col_[r] = qp.in[r][0].first;
        single_coef_[r] = qp.in[r][0].second;
      } else {
        slot_[r] = m++;
      }
    }
    m_ = m;
    const int dim = n_ + p_ + m_;
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < dim; ++i) t.emplace_back(i, i, 0.0);
    for (const auto& tr : qp.q) {
      if (tr.row() >= tr.col()) t.emplace_back(tr.row(), tr.col(), 0.0);
    }
    for (int r = 0; r < p_; ++r) {
      for (const auto& [c, v] : qp.eq[r]) t.emplace_back(n_ + r, c, 0.0);
    }
    for (int r = 0; r < q_; ++r) {
      if (slot_[r] < 0) continue;
      for (const auto& [c, v] : qp.in[r]) t.emplace_back(n_ + p_ + slot_[r], c, 0.0);
    }
    kkt_.resize(dim, dim);
    kkt_.setFromTriplets(t.begin(), t.end());
    kkt_.makeCompressed();

    base_.assign(kkt_.nonZeros(), 0.0);
    for (int i = 0; i < dim; ++i) diag_.push_back(pos(i, i));
    for (const auto& tr : qp.q) {
      if (tr.row() >= tr.col()) base_[pos(tr.row(), tr.col())] += tr.value();
    }
    for (int r = 0; r < p_; ++r) {
      for (const auto& [c, v] : qp.eq[r]) base_[pos(n_ + r, c)] += v;
    }
    for (int r = 0; r < q_; ++r) {
      if (slot_[r] < 0) continue;
      for (const auto& [c, v] : qp.in[r]) base_[pos(n_ + p_ + slot_[r], c)] += v;
    }
    ldlt_.analyzePattern(kkt_);
  }

  int pos(int row, int col) const {
    const int* inner = kkt_.innerIndexPtr();
    const int begin = kkt_.outerIndexPtr()[col];
    const int end = kkt_.outerIndexPtr()[col + 1];
    const int* it = std::lower_bound(inner + begin, inner + end, row);
    return static_cast<int>(it - inner);
  }

  // Retries with heavier regularization when the pivots break down.
  bool factorize(const Vec& s, const Vec& z) {
    d_ = s.cwiseQuotient(z);
    for (double reg = kReg; reg <= 1e-4; reg *= 100.0) {
      double* vals = kkt_.valuePtr();
      std::copy(base_.begin(), base_.end(), vals);
      for (int i = 0; i < n_; ++i) vals[diag_[i]] += reg;
      for (int r = 0; r < p_; ++r) vals[diag_[n_ + r]] -= reg;
      for (int r = 0; r < q_; ++r) {
        if (slot_[r] >= 0) {
          vals[diag_[n_ + p_ + slot_[r]]] -= d_(r) + reg;
        } else {
          vals[diag_[single_col_[r]]] += single_coef_[r] * single_coef_[r] / d_(r);
        }
      }
      ldlt_.factorize(kkt_);
      if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().allFinite()) return true;
    }
    return false;
  }

  // Unregularized KKT operator.
  void apply(const Vec& vx, const Vec& vy, const Vec& vz, Vec& ox, Vec& oy, Vec& oz) const {
    ox = q_mat_ * vx + e_mat_.transpose() * vy + g_mat_.transpose() * vz;
    oy = e_mat_ * vx;
    oz = g_mat_ * vx - d_.cwiseProduct(vz);
  }

  // One pass through the factored (folded) system.
  void solve_folded(const Vec& rx, const Vec& ry, const Vec& rz, Vec& ox, Vec& oy,
                    Vec& oz) {
    Vec rhs(n_ + p_ + m_);
    rhs.head(n_) = rx;
    rhs.segment(n_, p_) = ry;
    for (int r = 0; r < q_; ++r) {
      if (slot_[r] >= 0) {
        rhs(n_ + p_ + slot_[r]) = rz(r);
      } else {
        rhs(single_col_[r]) += single_coef_[r] * rz(r) / d_(r);
      }
    }
    const Vec sol = ldlt_.solve(rhs);
    ox = sol.head(n_);
    oy = sol.segment(n_, p_);
    oz.resize(q_);
    for (int r = 0; r < q_; ++r) {
      if (slot_[r] >= 0) {
        oz(r) = sol(n_ + p_ + slot_[r]);
      } else {
        oz(r) = (single_coef_[r] * ox(single_col_[r]) - rz(r)) / d_(r);
      }
    }
  }

  void solve(const Vec& rx, const Vec& ry, const Vec& rz, const Vec& s, const Vec& z, Vec& dx,
             Vec& dy, Vec& dz) {
    (void)s;
    (void)z;
    solve_folded(rx, ry, rz, dx, dy, dz);
    const double rhs_norm =
        std::max({1e-300, inf_norm(rx), inf_norm(ry), inf_norm(rz)});
    double last = kInfinity;
    for (int k = 0; k < kRefine; ++k) {
      Vec ox, oy, oz;
      apply(dx, dy, dz, ox, oy, oz);
      ox = rx - ox;
      oy = ry - oy;
      oz = rz - oz;
      const double res = std::max({inf_norm(ox), inf_norm(oy), inf_norm(oz)});
      if (res <= 1e-12 * rhs_norm || res > 0.25 * last) break;
      last = res;
      Vec cx, cy, cz;
      solve_folded(ox, oy, oz, cx, cy, cz);
      dx += cx;
      dy += cy;
      dz += cz;
    }
  }

  void direction(const Vec& rd, const Vec& re, const Vec& rg, const Vec& rc, const Vec& s,
                 const Vec& z, Vec& dx, Vec& dy, Vec& dz, Vec& ds) {
    // Z ds + S dz = -rc with ds = -rg - G dx.
    const Vec rz = -rg + rc.cwiseQuotient(z);
    solve(-rd, -re, rz, s, z, dx, dy, dz);
    ds = -(rc + s.cwiseProduct(dz)).cwiseQuotient(z);
  }

  static double max_step(const Vec& s, const Vec& ds, const Vec& z, const Vec& dz) {
    double a = 1.0 / 0.99;
    for (int i = 0; i < s.size(); ++i) {
      if (ds(i) < 0.0) a = std::min(a, -s(i) / ds(i));
      if (dz(i) < 0.0) a = std::min(a, -z(i) / dz(i));
    }
    return a;
  }

  static constexpr double kReg = 1e-9;
  static constexpr int kRefine = 6;
  static constexpr double kGapTol = 1e-8;
  static constexpr double kStallTol = 1e-7;
  static constexpr double kFarkasTol = 1e-8;

  int n_, p_, q_;
  int m_ = 0;  // rows kept in the factored system
  QpOptions opt_;
  SpMat q_mat_;
  SpRowMat e_mat_;
  SpRowMat g_mat_;
  Vec c_, e_, g_;
  Vec d_;
  SpMat kkt_;
  std::vector<double> base_;
  std::vector<int> diag_;
  std::vector<int> slot_;
  std::vector<int> single_col_;
  std::vector<double> single_coef_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

// Elastic feasibility problem: min sum(v) with every row relaxed by v >= 0.
// Its optimum is zero exactly when the original rows are consistent.
StandardQp phase_one(const StandardQp& qp) {
  StandardQp ph;
  const int p = static_cast<int>(qp.eq.size());
  const int q = static_cast<int>(qp.in.size());
  ph.n = qp.n + 2 * p + q;
  ph.c = Vec::Zero(ph.n);
  ph.c.tail(2 * p + q).setOnes();
  for (int r = 0; r < p; ++r) {
    Row row = qp.eq[r];
    row.emplace_back(qp.n + 2 * r, 1.0);
    row.emplace_back(qp.n + 2 * r + 1, -1.0);
    ph.eq.push_back(std::move(row));
    ph.e.push_back(qp.e[r]);
  }
  for (int r = 0; r < q; ++r) {
    Row row = qp.in[r];
    row.emplace_back(qp.n + 2 * p + r, -1.0);
    ph.in.push_back(std::move(row));
    ph.g.push_back(qp.g[r]);
  }
  for (int k = qp.n; k < ph.n; ++k) {
    ph.in.push_back({{k, -1.0}});
    ph.g.push_back(0.0);
  }
  return ph;
}

}  // namespace

Solution solve_qp_bounds(const MiqpModel& model, const std::vector<double>& lower,
                         const std::vector<double>& upper, const QpOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Solution sol;
  sol.stats.qp_solves = 1;
  auto finish = [&]() {
    sol.stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sol;
  };
  if (static_cast<int>(lower.size()) != model.num_variables() ||
      static_cast<int>(upper.size()) != model.num_variables()) {
    throw InvalidModel("bound vectors must cover every column");
  }
  Presolved pre = presolve(model, lower, upper);
  if (pre.infeasible) {
    sol.status = SolveStatus::Infeasible;
    sol.certificate = *pre.infeasible;
    return finish();
  }

  Vec x = Vec::Zero(pre.qp.n);
  if (pre.qp.n > 0) {
    InteriorPoint ipm(pre.qp, options);
    IpmResult r = ipm.run();
    sol.stats.iterations = r.iterations;
    if (r.status == IpmStatus::Infeasible) {
      sol.status = SolveStatus::Infeasible;
      char buf[96];
      std::snprintf(buf, sizeof(buf), "Farkas ray with relative residual %.3e", r.farkas_ratio);
      sol.certificate = buf;
      return finish();
    }
    if (r.status == IpmStatus::Failed) {
      StandardQp ph = phase_one(pre.qp);
      InteriorPoint ipm1(ph, options);
      IpmResult r1 = ipm1.run();
      sol.stats.iterations += r1.iterations;
      // The elastic optimum only has to be told apart from zero, so a
      // stalled but nearly converged phase 1 is still conclusive.
      if (r1.x.size() == ph.n && r1.merit <= kPhaseOneTol) {
        const double violation = r1.x.tail(ph.n - pre.qp.n).sum();
        const double slack = r1.merit * (1.0 + std::abs(r1.objective)) * 10.0;
        if (violation > 1e-7 + slack) {
          char buf[96];
          std::snprintf(buf, sizeof(buf), "phase-1 optimum %.3e > 0", violation);
          sol.status = SolveStatus::Infeasible;
          sol.certificate = buf;
          return finish();
        }
      }
      sol.status = SolveStatus::IterLimit;
      if (r.x.size() == pre.qp.n) x = r.x;
    } else {
      sol.status = SolveStatus::Optimal;
      x = r.x;
    }
  } else {
    sol.status = SolveStatus::Optimal;
  }

  sol.values.assign(model.num_variables(), 0.0);
  for (int i = 0; i < model.num_variables(); ++i) {
    sol.values[i] = pre.column[i] >= 0 ? x(pre.column[i]) : pre.fixed_value[i];
  }
  sol.objective = model.objective_value(sol.values);
  for (int b : model.binaries()) {
    sol.binary_assignment.push_back(static_cast<int>(std::lround(sol.values[b])));
  }
  return finish();
}

Solution solve_qp(const MiqpModel& model, const std::map<int, double>& fixed,
                  const QpOptions& options) {
  std::vector<double> lo(model.num_variables());
  std::vector<double> hi(model.num_variables());
  for (int i = 0; i < model.num_variables(); ++i) {
    lo[i] = model.variables()[i].lower;
    hi[i] = model.variables()[i].upper;
  }
  for (const auto& [col, v] : fixed) {
    if (col < 0 || col >= model.num_variables()) throw InvalidModel("fixing unknown column");
    lo[col] = v;
    hi[col] = v;
  }
  return solve_qp_bounds(model, lo, hi, options);
}

}  // namespace ctstl
