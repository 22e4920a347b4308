#pragma once

#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ctstl {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class Sense { Le, Eq, Ge };

struct Variable {
  std::string name;
  double lower = -kInfinity;
  double upper = kInfinity;
  bool binary = false;
};

/// sum(terms) <sense> rhs. Big-M rows remember the indicator column and the
/// magnitude of M so a solution can be audited for binding relaxations.
struct LinearConstraint {
  std::string name;
  std::vector<std::pair<int, double>> terms;
  Sense sense = Sense::Le;
  double rhs = 0.0;
  int big_m_var = -1;
};

/// coef * x_i * x_j with i <= j.
struct QuadTerm {
  int i;
  int j;
  double coef;
};

/// Mixed-integer convex QP:  min sum quad + linear  s.t. linear rows, bounds,
/// some columns binary.
class MiqpModel {
 public:
  int add_variable(std::string name, double lower = -kInfinity,
                   double upper = kInfinity);
  int add_binary(std::string name);
  int add_constraint(std::string name, std::vector<std::pair<int, double>> terms,
                     Sense sense, double rhs, int big_m_var = -1);
  void add_quadratic(int i, int j, double coef);
  void add_linear_objective(int i, double coef);
  void set_bounds(int var, double lower, double upper);
  /// Marks `binary` as the sign indicator of expr + constant: 1 when it is
  /// negative. The search completes such binaries from a relaxation before
  /// branching on them.
  void set_sign_indicator(int binary, std::vector<std::pair<int, double>> expr,
                          double constant = 0.0);

  const std::vector<Variable>& variables() const noexcept { return vars_; }
  const std::vector<LinearConstraint>& constraints() const noexcept { return rows_; }
  const std::vector<QuadTerm>& quadratic() const noexcept { return quad_; }
  const std::vector<double>& linear() const noexcept { return lin_; }
  int num_variables() const noexcept { return static_cast<int>(vars_.size()); }
  int num_constraints() const noexcept { return static_cast<int>(rows_.size()); }
  /// Column indices of the binaries, ascending.
  std::vector<int> binaries() const;
  int find_variable(const std::string& name) const;
  struct SignIndicator {
    std::vector<std::pair<int, double>> expr;
    double constant = 0.0;
  };
  const std::map<int, SignIndicator>& sign_indicators() const noexcept { return signs_; }

  double objective_value(const std::vector<double>& x) const;
  /// Largest violation over rows and bounds (binary integrality excluded).
  double max_violation(const std::vector<double>& x) const;
  /// Throws InvalidModel unless the objective is PSD and every entry finite.
  void validate() const;

 private:
  std::vector<Variable> vars_;
  std::vector<LinearConstraint> rows_;
  std::vector<QuadTerm> quad_;
  std::vector<double> lin_;
  std::map<std::string, int> names_;
  std::map<int, SignIndicator> signs_;
};

enum class SolveStatus { Optimal, Infeasible, IterLimit };

const char* to_string(SolveStatus s);

struct SolveStats {
  long nodes = 0;
  long incumbents = 0;
  long qp_solves = 0;
  int iterations = 0;  // interior-point iterations (single QP solves)
  double seconds = 0.0;
};

/// Node record kept when BnbOptions::record_trace is set.
struct NodeRecord {
  long id;
  long parent;
  double bound;  // relaxation objective, +inf when infeasible
};

struct Solution {
  SolveStatus status = SolveStatus::IterLimit;
  std::vector<double> values;
  double objective = kInfinity;
  std::vector<int> binary_assignment;  // aligned with MiqpModel::binaries()
  SolveStats stats;
  std::string certificate;  // why a problem was declared infeasible
  std::vector<NodeRecord> trace;
};

struct QpOptions {
  double tolerance = 1e-9;
  int max_iterations = 120;
};

/// Convex QP relaxation with the listed columns fixed (value per column
/// index); unfixed binaries are relaxed to [0, 1].
Solution solve_qp(const MiqpModel& model, const std::map<int, double>& fixed = {},
                  const QpOptions& options = {});

/// Same, with explicit per-column bounds replacing the model's.
Solution solve_qp_bounds(const MiqpModel& model, const std::vector<double>& lower,
                         const std::vector<double>& upper,
                         const QpOptions& options = {});

struct BnbOptions {
  // Nodes evaluated per round. Fixed independently of the thread count so
  // the search order (and node count) is reproducible.
  int batch = 4;
  // Solve the batch on OpenMP threads; false keeps the serial reference loop.
  bool parallel = true;
  long max_nodes = 200000;
  double gap = 1e-6;
  double integrality_tol = 1e-6;
  double time_limit = 900.0;
  // Depth-first dive from the current node every this many nodes while no
  // incumbent exists; 0 disables it.
  int dive_every = 50;
  long dive_budget = 400;  // QP solves per dive
  bool record_trace = false;
  QpOptions qp;
};

/// Best-first branch and bound on the binaries; branches on the most
/// fractional column, lowest index on ties.
Solution branch_and_bound(const MiqpModel& model, const BnbOptions& options = {});

/// LP-format text (objective, constraints, bounds, binaries).
std::string export_lp(const MiqpModel& model);

/// Big-M rows whose relaxed side uses (almost) all of M at `x`; a non-empty
/// result means M was too small for that row.
std::vector<int> binding_big_m_rows(const MiqpModel& model, const std::vector<double>& x,
                                    double fraction = 1.0 - 1e-6);

}  // namespace ctstl
