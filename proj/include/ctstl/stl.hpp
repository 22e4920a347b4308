#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctstl/lin_dynamics.hpp"

namespace ctstl {

/// Linear predicate  row x + offset >= 0.
struct Predicate {
  RowVector row;
  double offset = 0.0;
  std::string name;

  double value(const Vector& x) const { return row.dot(x) + offset; }
};

/// How a window certificate for an Always node bounds the predicate between
/// grid nodes.
enum class CbfMode {
  Direct,  // bound the predicate itself along the closed-form trajectory
  Zcbf,    // bound h' + a h (relative degree one)
  Ecbf,    // bound the exponential-CBF expression with pole-placed gains
};

struct CbfSettings {
  CbfMode mode = CbfMode::Direct;
  std::vector<double> poles;  // empty: {-2, -3, ...}
};

enum class FormulaKind { True, Pred, Not, And, Or, Eventually, Always, Until };

/// STL abstract syntax tree with bounded temporal operators. Plain value type;
/// build through the static factories.
struct Formula {
  FormulaKind kind = FormulaKind::True;
  Predicate pred;
  std::vector<Formula> children;
  double lo = 0.0;
  double hi = 0.0;
  // Per-node certificate settings; only meaningful on Always nodes.
  std::optional<CbfSettings> cbf;

  static Formula truth();
  static Formula predicate(Predicate p);
  static Formula negation(Formula f);
  static Formula conjunction(std::vector<Formula> fs);
  static Formula disjunction(std::vector<Formula> fs);
  static Formula eventually(double a, double b, Formula f);
  static Formula always(double a, double b, Formula f);
  static Formula until(double a, double b, Formula lhs, Formula rhs);

  bool is_temporal() const {
    return kind == FormulaKind::Eventually || kind == FormulaKind::Always ||
           kind == FormulaKind::Until;
  }
};

bool operator==(const Formula& a, const Formula& b);

/// Parses formula text over states x1..x<state_dim>.
///
/// Grammar (precedence ! > U > & > |):
///   formula   := disj
///   disj      := conj ('|' conj)*
///   conj      := until ('&' until)*
///   until     := unary ('U' '[' num ',' num ']' unary)?
///   unary     := '!' unary | ('G'|'F') '[' num ',' num ']' unary | atom
///   atom      := 'true' | '(' formula ')' | linexpr ('>='|'<='|'>'|'<') linexpr
///   linexpr   := ['-'] term (('+'|'-') term)*
///   term      := num ['*'] 'x'int | 'x'int | num
/// Strict comparisons are read as their non-strict counterparts.
Formula parse(const std::string& text, int state_dim);

/// Copy of `f` with `settings` attached to every Always node.
Formula with_cbf(Formula f, const CbfSettings& settings);

/// Canonical text; parse(to_string(f)) reproduces f.
std::string to_string(const Formula& f);

/// Nesting depth of interval upper bounds (the time the formula looks ahead).
double horizon(const Formula& f);

/// Negation normal form. Negated predicates flip sign and absorb
/// `eps_strict` so that y < 0 is materialized as -y - eps >= 0. Negation
/// above an Until stays in place (there is no bounded dual without Release).
Formula to_nnf(const Formula& f, double eps_strict = 1e-6);

/// All interval endpoints t + a and t + b reached when evaluating `f` at
/// t = 0, expanding nested operators over the nodes of `grid`.
std::vector<double> absolute_endpoints(const Formula& f, const TimeGrid& grid);

struct GroundedNode {
  FormulaKind kind = FormulaKind::True;
  Predicate pred;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> children;  // node ids
  std::optional<CbfSettings> cbf;
  // Evaluation time indices at which the node is needed.
  std::vector<int> times;
  // Temporal nodes: evaluation index -> node indices inside [t + a, t + b].
  std::map<int, std::vector<int>> targets;
  // Always nodes: evaluation index -> hold windows k (covering [t_k, t_k+1])
  // inside [t + a, t + b].
  std::map<int, std::vector<int>> windows;
};

struct GroundedFormula {
  std::vector<GroundedNode> nodes;
  int root = 0;
};

/// Maps every temporal interval onto grid indices. Throws UnalignedInterval
/// listing the endpoints that fall between nodes; no rounding is performed.
GroundedFormula ground(const Formula& f, const TimeGrid& grid);

/// A sampled trace: strictly increasing times with one state per time.
struct Sample {
  double t;
  Vector x;
};

/// Discrete-time quantitative semantics at the first sample. Temporal
/// operators range over the samples that fall inside their intervals.
/// Throws InsufficientTrace when the horizon extends past the last sample.
double discrete_robustness(const std::vector<Sample>& samples, const Formula& f);

/// Same, but evaluated at sample index `start`.
double discrete_robustness_at(const std::vector<Sample>& samples, const Formula& f,
                              int start);

}  // namespace ctstl
