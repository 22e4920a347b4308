#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ctstl/lin_dynamics.hpp"
#include "ctstl/miqp.hpp"
#include "ctstl/stl.hpp"

namespace ctstl {

struct EncodingConfig {
  double big_m = 1e4;
  double eps_strict = 1e-6;
  // Input box; empty vectors mean unbounded inputs.
  Vector u_lower;
  Vector u_upper;
  // Default poles when an Ecbf node has none: {-2, -3, ...}.
  std::vector<double> ecbf_poles;
  // Add the convex hull rows w <= e*gmin, w <= e*gmax next to the sign
  // binaries. They do not change the integer feasible set.
  bool hull_cuts = true;

  void validate(int inputs) const;
};

/// Affine expression over one model column: constant + sign * column, or a
/// plain constant when column < 0. Formula truth values are carried this way
/// so negation needs no extra variable.
struct Literal {
  int column = -1;
  double sign = 1.0;
  double constant = 0.0;

  static Literal fixed(bool v) { return {-1, 1.0, v ? 1.0 : 0.0}; }
  static Literal of(int col) { return {col, 1.0, 0.0}; }
  bool is_constant() const { return column < 0; }
  Literal negated() const { return {column, -sign, 1.0 - constant}; }
  double value(const std::vector<double>& x) const {
    return column < 0 ? constant : constant + sign * x[column];
  }
};

/// Exponential CBF data for h(x) = row x + offset.
struct EcbfSpec {
  Predicate h;
  int relative_degree = 0;
  std::vector<double> poles;
  // K_b on [h, h', ..., h^(r-1)]: coefficients of prod (s - p_i) below the
  // leading one, lowest power first.
  RowVector gains;
  // zeta = L_f^r h + L_g L_f^(r-1) h u + K_b xi_b, as rows on x and u.
  RowVector zeta_row;
  RowVector zeta_input;
  double zeta_offset = 0.0;
};

/// Smallest r with C A^(r-1) B != 0. Throws NoRelativeDegree if none <= n.
int relative_degree(const LinearSystem& sys, const RowVector& row);

/// Pole placement for the ECBF of `h`; empty `poles` selects {-2, -3, ...}.
EcbfSpec make_ecbf(const LinearSystem& sys, const Predicate& h, std::vector<double> poles);

/// Extremes of g(t) = e^{lambda t} t^j over [0, tau].
struct TermWindowBound {
  double g_min;
  double t_min;
  double g_max;
  double t_max;

  /// min over the window of coef * g(t).
  double min_value(double coef) const { return coef >= 0 ? coef * g_min : coef * g_max; }
  double argmin(double coef) const { return coef >= 0 ? t_min : t_max; }
};

TermWindowBound term_window_bound(double lambda, int power, double tau);

/// Exact minimum of coef e^{lambda t} t^j on [0, tau] and its location.
std::pair<double, double> term_window_min(double coef, double lambda, int power, double tau);

/// What a window certificate bounds: zeta (a linear output of x and u) must
/// stay non-negative over the window, and `start_conditions` must hold at the
/// window start. Together they keep `predicate` non-negative on the window.
struct Certificate {
  Predicate predicate;
  CbfMode mode = CbfMode::Direct;
  std::vector<double> poles;
  std::shared_ptr<const ModeDecomposition> zeta;
  std::vector<Predicate> start_conditions;
};

Certificate make_certificate(const LinearSystem& sys, const Predicate& p,
                             const CbfSettings& settings, const EncodingConfig& cfg);

/// One e^{lambda t} t^j term of zeta split into its state or input part.
struct CbfTerm {
  bool input_part = false;
  double lambda = 0.0;
  int power = 0;
  RowVector coeff;  // applied to x_k or u_k
  TermWindowBound bound;
  int z = -1;  // sign binary, 1 when coeff . v < 0
  int w = -1;  // lower-bound column; -1 when the term is a constant
};

struct CbfWindow {
  std::string tag;
  int window = 0;
  double tau = 0.0;
  Certificate certificate;
  Literal gate;
  std::vector<CbfTerm> terms;
  std::vector<int> x_cols;  // x_k
  std::vector<int> u_cols;  // u_k
  Vector x_fixed;           // x_k when it is pinned (k = 0), else empty
  int beta_x = -1;
  int beta_u = -1;
};

struct ControlTie {
  int window;  // window starting at a virtual node
  int source;  // window starting at the preceding real node
};

struct AlignedGrid {
  TimeGrid grid;
  std::vector<ControlTie> ties;
};

/// Inserts every interval endpoint that misses the grid as a virtual node and
/// ties its control to the preceding real sample. Throws EndpointOutOfRange
/// for endpoints outside [0, t_f].
AlignedGrid align_time_grid(const Formula& f, const TimeGrid& base);

/// Model under construction plus the handles later stages need.
struct Encoding {
  MiqpModel model;
  std::shared_ptr<const LinearSystem> system;
  TimeGrid grid = TimeGrid::uniform(1.0, 1);
  std::vector<ControlTie> ties;
  EncodingConfig config;
  Vector x0;
  std::vector<std::vector<int>> x;  // x[k][i]
  std::vector<std::vector<int>> u;  // u[k][i], one per window
  // Interval enclosure of the reachable states at each node.
  std::vector<Vector> x_lo;
  std::vector<Vector> x_hi;

  Formula normalized;
  GroundedFormula grounded;
  std::map<std::pair<int, int>, Literal> literals;  // (node, time index)
  Literal root = Literal::fixed(true);
  std::vector<CbfWindow> windows;
  std::vector<std::string> notes;

  // Rows whose needed big-M exceeded config.big_m and were capped.
  int capped_big_m = 0;

  int counter = 0;
  std::string fresh(const std::string& prefix) { return prefix + std::to_string(counter++); }
};

/// Variables, exact ZOH dynamics, input bounds, control ties and the
/// interval-weighted input energy objective.
Encoding encode_dynamics(std::shared_ptr<const LinearSystem> sys, const Vector& x0,
                         const AlignedGrid& grid, const EncodingConfig& cfg);

/// Window lower bound for the certificate over window k, relaxed when `gate`
/// is 0.
CbfWindow encode_cbf_window(Encoding& enc, const Certificate& cert, int k, Literal gate,
                            const std::string& tag);

/// ECBF form of encode_cbf_window.
CbfWindow encode_ecbf(Encoding& enc, const EcbfSpec& spec, int k, Literal gate,
                      const std::string& tag);

/// Big-M encoding of the grounded formula; pins the root to true and adds
/// window certificates under every Always node that carries CBF settings.
void encode_formula(Encoding& enc, const GroundedFormula& g);

struct Problem {
  std::shared_ptr<const LinearSystem> system;
  Vector x0;
  Formula formula;
  TimeGrid grid = TimeGrid::uniform(1.0, 1);
  EncodingConfig config;
};

/// normalize -> align grid -> ground -> dynamics -> formula.
Encoding build_miqp(const Problem& problem);

/// Value of zeta_min encoded for a window at a solution (binaries rounded).
double encoded_window_min(const CbfWindow& w, const std::vector<double>& values);

}  // namespace ctstl
