#include "ctstl/stl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ctstl/errors.hpp"

namespace ctstl {

namespace {

constexpr double kTimeTol = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_number(double v) {
  char buf[64];
  if (v == 0.0) v = 0.0;
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join_endpoints(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_number(v[i]);
  }
  return s;
}

}  // namespace

UnalignedInterval::UnalignedInterval(std::vector<double> endpoints)
    : Error("ground",
            "interval endpoints fall between grid nodes: " + join_endpoints(endpoints)),
      endpoints_(std::move(endpoints)) {}

Formula Formula::truth() { return Formula{}; }

Formula Formula::predicate(Predicate p) {
  Formula f;
  f.kind = FormulaKind::Pred;
  f.pred = std::move(p);
  return f;
}

Formula Formula::negation(Formula child) {
  Formula f;
  f.kind = FormulaKind::Not;
  f.children.push_back(std::move(child));
  return f;
}

Formula Formula::conjunction(std::vector<Formula> fs) {
  if (fs.size() == 1) return std::move(fs.front());
  Formula f;
  f.kind = FormulaKind::And;
  f.children = std::move(fs);
  return f;
}

Formula Formula::disjunction(std::vector<Formula> fs) {
  if (fs.size() == 1) return std::move(fs.front());
  Formula f;
  f.kind = FormulaKind::Or;
  f.children = std::move(fs);
  return f;
}

namespace {

Formula temporal(FormulaKind kind, double a, double b, std::vector<Formula> children) {
  if (!(a >= 0.0) || !(b >= a) || !std::isfinite(b)) {
    throw InvalidConfig("temporal interval must satisfy 0 <= a <= b < inf");
  }
  Formula f;
  f.kind = kind;
  f.lo = a;
  f.hi = b;
  f.children = std::move(children);
  return f;
}

}  // namespace

Formula Formula::eventually(double a, double b, Formula child) {
  return temporal(FormulaKind::Eventually, a, b, {std::move(child)});
}

Formula Formula::always(double a, double b, Formula child) {
  return temporal(FormulaKind::Always, a, b, {std::move(child)});
}

Formula Formula::until(double a, double b, Formula lhs, Formula rhs) {
  return temporal(FormulaKind::Until, a, b, {std::move(lhs), std::move(rhs)});
}

bool operator==(const Formula& a, const Formula& b) {
  if (a.kind != b.kind || a.lo != b.lo || a.hi != b.hi) return false;
  if (a.kind == FormulaKind::Pred) {
    if (a.pred.row.size() != b.pred.row.size() || a.pred.row != b.pred.row ||
        a.pred.offset != b.pred.offset) {
      return false;
    }
  }
  return a.children == b.children;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

enum class Tok {
  Num, Ident, LParen, RParen, LBrack, RBrack, Comma, And, Or, Not,
  Plus, Minus, Star, Ge, Le, End
};

struct Token {
  Tok kind;
  std::string text;
  double number = 0.0;
  std::size_t pos = 0;
};

std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    auto push = [&](Tok k, std::size_t len) {
      out.push_back({k, s.substr(start, len), 0.0, start});
      i += len;
    };
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      auto res = std::from_chars(s.data() + i, s.data() + s.size(), v);
      if (res.ec != std::errc()) throw ParseError("malformed number", i);
      const std::size_t len = static_cast<std::size_t>(res.ptr - (s.data() + i));
      out.push_back({Tok::Num, s.substr(i, len), v, start});
      i += len;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      // "x12", "true", "G", "F", "U"; single-letter operators stop before
      // digits only when they are not a state reference.
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      out.push_back({Tok::Ident, s.substr(i, j - i), 0.0, start});
      i = j;
    } else if (c == '(') {
      push(Tok::LParen, 1);
    } else if (c == ')') {
      push(Tok::RParen, 1);
    } else if (c == '[') {
      push(Tok::LBrack, 1);
    } else if (c == ']') {
      push(Tok::RBrack, 1);
    } else if (c == ',') {
      push(Tok::Comma, 1);
    } else if (c == '&') {
      push(Tok::And, (i + 1 < s.size() && s[i + 1] == '&') ? 2 : 1);
    } else if (c == '|') {
      push(Tok::Or, (i + 1 < s.size() && s[i + 1] == '|') ? 2 : 1);
    } else if (c == '!' || c == '~') {
      push(Tok::Not, 1);
    } else if (c == '+') {
      push(Tok::Plus, 1);
    } else if (c == '-') {
      push(Tok::Minus, 1);
    } else if (c == '*') {
      push(Tok::Star, 1);
    } else if (c == '>') {
      push(Tok::Ge, (i + 1 < s.size() && s[i + 1] == '=') ? 2 : 1);
    } else if (c == '<') {
      push(Tok::Le, (i + 1 < s.size() && s[i + 1] == '=') ? 2 : 1);
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", i);
    }
  }
  out.push_back({Tok::End, "", 0.0, s.size()});
  return out;
}

class Parser {
 public:
  Parser(const std::string& text, int dim) : text_(text), toks_(tokenize(text)), dim_(dim) {}

  Formula run() {
    Formula f = disj();
    if (peek().kind != Tok::End) fail("unexpected trailing input");
    return f;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }
  bool accept(Tok k) {
    if (peek().kind == k) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, peek().pos); }
  void expect(Tok k, const char* what) {
    if (!accept(k)) fail(std::string("expected ") + what);
  }
  bool at_ident(const char* name) const {
    return peek().kind == Tok::Ident && peek().text == name;
  }

  Formula disj() {
    std::vector<Formula> parts{conj()};
    while (accept(Tok::Or)) parts.push_back(conj());
    return Formula::disjunction(std::move(parts));
  }

  Formula conj() {
    std::vector<Formula> parts{until()};
    while (accept(Tok::And)) parts.push_back(until());
    return Formula::conjunction(std::move(parts));
  }

  Formula until() {
    Formula lhs = unary();
    if (at_ident("U")) {
      ++pos_;
      auto [a, b] = interval();
      Formula rhs = unary();
      return Formula::until(a, b, std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  std::pair<double, double> interval() {
    expect(Tok::LBrack, "'['");
    const std::size_t at = peek().pos;
    const double a = number();
    expect(Tok::Comma, "','");
    const double b = number();
    expect(Tok::RBrack, "']'");
    if (!(a >= 0.0) || !(b >= a)) throw ParseError("interval must satisfy 0 <= a <= b", at);
    return {a, b};
  }

  double number() {
    bool neg = accept(Tok::Minus);
    if (peek().kind != Tok::Num) fail("expected number");
    const double v = next().number;
    return neg ? -v : v;
  }

  Formula unary() {
    if (accept(Tok::Not)) return Formula::negation(unary());
    if (at_ident("G") || at_ident("F")) {
      const bool always = peek().text == "G";
      ++pos_;
      auto [a, b] = interval();
      Formula child = unary();
      return always ? Formula::always(a, b, std::move(child))
                    : Formula::eventually(a, b, std::move(child));
    }
    return atom();
  }

  Formula atom() {
    if (accept(Tok::LParen)) {
      Formula f = disj();
      expect(Tok::RParen, "')'");
      return f;
    }
    if (at_ident("true")) {
      ++pos_;
      return Formula::truth();
    }
    const std::size_t start = peek().pos;
    auto [lrow, lconst] = linexpr();
    bool ge = false;
    if (accept(Tok::Ge)) {
      ge = true;
    } else if (!accept(Tok::Le)) {
      fail("expected '>=' or '<='");
    }
    auto [rrow, rconst] = linexpr();
    const std::size_t end = peek().pos;
    Predicate p;
    p.row = ge ? RowVector(lrow - rrow) : RowVector(rrow - lrow);
    p.offset = ge ? lconst - rconst : rconst - lconst;
    p.name = text_.substr(start, end - start);
    while (!p.name.empty() && std::isspace(static_cast<unsigned char>(p.name.back()))) {
      p.name.pop_back();
    }
    return Formula::predicate(std::move(p));
  }

  std::pair<RowVector, double> linexpr() {
    RowVector row = RowVector::Zero(dim_);
    double constant = 0.0;
    double sign = 1.0;
    if (accept(Tok::Minus)) {
      sign = -1.0;
    } else {
      accept(Tok::Plus);
    }
    term(row, constant, sign);
    while (true) {
      if (accept(Tok::Plus)) {
        term(row, constant, 1.0);
      } else if (accept(Tok::Minus)) {
        term(row, constant, -1.0);
      } else {
        break;
      }
    }
    return {row, constant};
  }

  void term(RowVector& row, double& constant, double sign) {
    if (accept(Tok::Minus)) sign = -sign;
    double coef = 1.0;
    bool have_num = false;
    if (peek().kind == Tok::Num) {
      coef = next().number;
      have_num = true;
      accept(Tok::Star);
    }
    if (peek().kind == Tok::Ident && is_state_ref(peek().text)) {
      const Token& t = next();
      const int idx = std::stoi(t.text.substr(1));
      if (idx < 1 || idx > dim_) throw UnknownStateIndex(idx, t.pos);
      row(idx - 1) += sign * coef;
      return;
    }
    if (!have_num) fail("expected number or state reference");
    constant += sign * coef;
  }

  static bool is_state_ref(const std::string& s) {
    if (s.size() < 2 || s[0] != 'x') return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  }

  const std::string& text_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int dim_;
};

}  // namespace

Formula parse(const std::string& text, int state_dim) {
  if (state_dim < 1) throw InvalidConfig("state dimension must be positive");
  return Parser(text, state_dim).run();
}

namespace {

std::string predicate_text(const Predicate& p) {
  int unit = -1;
  int nonzero = 0;
  for (int i = 0; i < p.row.size(); ++i) {
    if (p.row(i) != 0.0) {
      ++nonzero;
      unit = i;
    }
  }
  if (nonzero == 1 && p.row(unit) == 1.0) {
    return "x" + std::to_string(unit + 1) + " >= " + format_number(-p.offset);
  }
  if (nonzero == 1 && p.row(unit) == -1.0) {
    return "x" + std::to_string(unit + 1) + " <= " + format_number(p.offset);
  }
  std::string s;
  for (int i = 0; i < p.row.size(); ++i) {
    if (p.row(i) == 0.0) continue;
    if (!s.empty()) s += " + ";
    s += format_number(p.row(i)) + "*x" + std::to_string(i + 1);
  }
  if (!s.empty()) s += " + ";
  s += format_number(p.offset);
  return s + " >= 0";
}

std::string interval_text(const Formula& f) {
  return "[" + format_number(f.lo) + "," + format_number(f.hi) + "]";
}

}  // namespace

std::string to_string(const Formula& f) {
  switch (f.kind) {
    case FormulaKind::True:
      return "true";
    case FormulaKind::Pred:
      return "(" + predicate_text(f.pred) + ")";
    case FormulaKind::Not:
      return "!" + to_string(f.children[0]);
    case FormulaKind::And:
    case FormulaKind::Or: {
      std::string s = "(";
      for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) s += f.kind == FormulaKind::And ? " & " : " | ";
        s += to_string(f.children[i]);
      }
      return s + ")";
    }
    case FormulaKind::Eventually:
      return "F" + interval_text(f) + to_string(f.children[0]);
    case FormulaKind::Always:
      return "G" + interval_text(f) + to_string(f.children[0]);
    case FormulaKind::Until:
      return "(" + to_string(f.children[0]) + " U" + interval_text(f) + " " +
             to_string(f.children[1]) + ")";
  }
  return "";
}

double horizon(const Formula& f) {
  double h = 0.0;
  for (const auto& c : f.children) h = std::max(h, horizon(c));
  return f.is_temporal() ? f.hi + h : h;
}

namespace {

Formula nnf(const Formula& f, bool negate, double eps) {
  auto map_children = [&](bool neg) {
    std::vector<Formula> out;
    out.reserve(f.children.size());
    for (const auto& c : f.children) out.push_back(nnf(c, neg, eps));
    return out;
  };
  auto flatten = [](FormulaKind kind, std::vector<Formula> parts) {
    std::vector<Formula> flat;
    for (auto& p : parts) {
      if (p.kind == kind) {
        for (auto& c : p.children) flat.push_back(std::move(c));
      } else {
        flat.push_back(std::move(p));
      }
    }
    return kind == FormulaKind::And ? Formula::conjunction(std::move(flat))
                                    : Formula::disjunction(std::move(flat));
  };
  switch (f.kind) {
    case FormulaKind::True:
      return negate ? Formula::negation(Formula::truth()) : f;
    case FormulaKind::Pred: {
      if (!negate) return f;
      Predicate p = f.pred;
      p.row = -p.row;
      p.offset = -p.offset - eps;
      p.name = "!(" + f.pred.name + ")";
      return Formula::predicate(std::move(p));
    }
    case FormulaKind::Not:
      return nnf(f.children[0], !negate, eps);
    case FormulaKind::And:
      return flatten(negate ? FormulaKind::Or : FormulaKind::And, map_children(negate));
    case FormulaKind::Or:
      return flatten(negate ? FormulaKind::And : FormulaKind::Or, map_children(negate));
    case FormulaKind::Eventually:
    case FormulaKind::Always: {
      Formula g = f;
      g.children = map_children(negate);
      if (negate) {
        g.kind = f.kind == FormulaKind::Always ? FormulaKind::Eventually : FormulaKind::Always;
        g.cbf.reset();
      }
      return g;
    }
    case FormulaKind::Until: {
      Formula g = f;
      g.children = map_children(false);
      return negate ? Formula::negation(std::move(g)) : g;
    }
  }
  return f;
}

}  // namespace

Formula to_nnf(const Formula& f, double eps_strict) { return nnf(f, false, eps_strict); }

Formula with_cbf(Formula f, const CbfSettings& settings) {
  for (auto& c : f.children) c = with_cbf(std::move(c), settings);
  if (f.kind == FormulaKind::Always) f.cbf = settings;
  return f;
}

namespace {

void collect_endpoints(const Formula& f, double t, const TimeGrid& grid,
                       std::set<double>& out) {
  if (!f.is_temporal()) {
    for (const auto& c : f.children) collect_endpoints(c, t, grid, out);
    return;
  }
  const double ta = t + f.lo;
  const double tb = t + f.hi;
  out.insert(ta);
  out.insert(tb);
  // Evaluation times of the children: grid nodes inside the interval plus the
  // endpoints themselves (they become nodes once inserted).
  std::set<double> inner{ta, tb};
  for (double node : grid.nodes()) {
    if (node >= ta - kTimeTol && node <= tb + kTimeTol) inner.insert(node);
  }
  if (f.kind == FormulaKind::Until) {
    for (double s : inner) collect_endpoints(f.children[1], s, grid, out);
    for (double node : grid.nodes()) {
      if (node >= t - kTimeTol && node <= tb + kTimeTol) {
        collect_endpoints(f.children[0], node, grid, out);
      }
    }
    collect_endpoints(f.children[0], t, grid, out);
    return;
  }
  for (double s : inner) collect_endpoints(f.children[0], s, grid, out);
}

}  // namespace

std::vector<double> absolute_endpoints(const Formula& f, const TimeGrid& grid) {
  std::set<double> raw;
  collect_endpoints(f, 0.0, grid, raw);
  std::vector<double> out;
  for (double v : raw) {
    if (out.empty() || v - out.back() > kTimeTol) out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grounding

namespace {

class Grounder {
 public:
  explicit Grounder(const TimeGrid& grid) : grid_(grid) {}

  int build(const Formula& f) {
    const int id = static_cast<int>(out_.nodes.size());
    out_.nodes.emplace_back();
    GroundedNode node;
    node.kind = f.kind;
    node.pred = f.pred;
    node.lo = f.lo;
    node.hi = f.hi;
    node.cbf = f.cbf;
    for (const auto& c : f.children) node.children.push_back(build(c));
    out_.nodes[id] = std::move(node);
    times_.resize(out_.nodes.size());
    return id;
  }

  void need(int id, int t) {
    if (!times_[id].insert(t).second) return;
    GroundedNode& node = out_.nodes[id];
    if (node.kind != FormulaKind::Eventually && node.kind != FormulaKind::Always &&
        node.kind != FormulaKind::Until) {
      const std::vector<int> children = node.children;
      for (int c : children) need(c, t);
      return;
    }
    const double ta = grid_.time(t) + node.lo;
    const double tb = grid_.time(t) + node.hi;
    if (tb > grid_.t_final() + kTimeTol) {
      throw HorizonExceeded("interval end " + format_number(tb) +
                            " exceeds the grid horizon " + format_number(grid_.t_final()));
    }
    const auto ia = grid_.index_of(ta, kTimeTol);
    const auto ib = grid_.index_of(tb, kTimeTol);
    if (!ia) unaligned_.insert(ta);
    if (!ib) unaligned_.insert(tb);
    if (!ia || !ib) return;
    std::vector<int> range;
    for (int i = *ia; i <= *ib; ++i) range.push_back(i);
    node.targets[t] = range;
    if (node.kind == FormulaKind::Always) {
      std::vector<int> wins;
      for (int k = *ia; k < *ib; ++k) wins.push_back(k);
      node.windows[t] = std::move(wins);
    }
    const std::vector<int> children = node.children;
    if (node.kind == FormulaKind::Until) {
      for (int i : range) need(children[1], i);
      for (int i = t; i <= *ib; ++i) need(children[0], i);
    } else {
      for (int i : range) need(children[0], i);
    }
  }

  GroundedFormula finish(int root) {
    if (!unaligned_.empty()) {
      std::vector<double> v;
      for (double e : unaligned_) {
        if (v.empty() || e - v.back() > kTimeTol) v.push_back(e);
      }
      throw UnalignedInterval(std::move(v));
    }
    for (std::size_t i = 0; i < out_.nodes.size(); ++i) {
      out_.nodes[i].times.assign(times_[i].begin(), times_[i].end());
    }
    out_.root = root;
    return std::move(out_);
  }

 private:
  const TimeGrid& grid_;
  GroundedFormula out_;
  std::vector<std::set<int>> times_;
  std::set<double> unaligned_;
};

}  // namespace

GroundedFormula ground(const Formula& f, const TimeGrid& grid) {
  Grounder g(grid);
  const int root = g.build(f);
  g.need(root, 0);
  return g.finish(root);
}

// ---------------------------------------------------------------------------
// Discrete robustness

namespace {

class DiscreteEvaluator {
 public:
  explicit DiscreteEvaluator(const std::vector<Sample>& s) : samples_(s) {}

  double rob(const Formula& f, int i) {
    const auto key = std::make_pair(&f, i);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const double v = compute(f, i);
    memo_.emplace(key, v);
    return v;
  }

 private:
  struct KeyHash {
    std::size_t operator()(const std::pair<const Formula*, int>& k) const {
      return std::hash<const void*>()(k.first) * 31u + static_cast<std::size_t>(k.second);
    }
  };

  std::pair<int, int> window(const Formula& f, int i) const {
    const double t = samples_[i].t;
    const double ta = t + f.lo;
    const double tb = t + f.hi;
    if (tb > samples_.back().t + kTimeTol) {
      throw InsufficientTrace("formula needs the trace up to t = " + format_number(tb) +
                              " but it ends at " + format_number(samples_.back().t));
    }
    int first = i;
    while (first < static_cast<int>(samples_.size()) && samples_[first].t < ta - kTimeTol) ++first;
    int last = first - 1;
    while (last + 1 < static_cast<int>(samples_.size()) && samples_[last + 1].t <= tb + kTimeTol) ++last;
    return {first, last};
  }

  double compute(const Formula& f, int i) {
    switch (f.kind) {
      case FormulaKind::True:
        return kInf;
      case FormulaKind::Pred:
        return f.pred.value(samples_[i].x);
      case FormulaKind::Not:
        return -rob(f.children[0], i);
      case FormulaKind::And: {
        double v = kInf;
        for (const auto& c : f.children) v = std::min(v, rob(c, i));
        return v;
      }
      case FormulaKind::Or: {
        double v = -kInf;
        for (const auto& c : f.children) v = std::max(v, rob(c, i));
        return v;
      }
      case FormulaKind::Eventually: {
        auto [a, b] = window(f, i);
        double v = -kInf;
        for (int j = a; j <= b; ++j) v = std::max(v, rob(f.children[0], j));
        return v;
      }
      case FormulaKind::Always: {
        auto [a, b] = window(f, i);
        double v = kInf;
        for (int j = a; j <= b; ++j) v = std::min(v, rob(f.children[0], j));
        return v;
      }
      case FormulaKind::Until: {
        auto [a, b] = window(f, i);
        double best = -kInf;
        double prefix = kInf;
        int l = i;
        for (int j = a; j <= b; ++j) {
          for (; l <= j; ++l) prefix = std::min(prefix, rob(f.children[0], l));
          best = std::max(best, std::min(rob(f.children[1], j), prefix));
        }
        return best;
      }
    }
    return 0.0;
  }

  const std::vector<Sample>& samples_;
  std::unordered_map<std::pair<const Formula*, int>, double, KeyHash> memo_;
};

}  // namespace

double discrete_robustness_at(const std::vector<Sample>& samples, const Formula& f,
                              int start) {
  if (samples.empty()) throw InsufficientTrace("empty trace");
  if (start < 0 || start >= static_cast<int>(samples.size())) {
    throw InsufficientTrace("evaluation index outside the trace");
  }
  if (samples[start].t + horizon(f) > samples.back().t + kTimeTol) {
    throw InsufficientTrace("trace ends at " + format_number(samples.back().t) +
                            " before the formula horizon " +
                            format_number(samples[start].t + horizon(f)));
  }
  DiscreteEvaluator ev(samples);
  return ev.rob(f, start);
}

double discrete_robustness(const std::vector<Sample>& samples, const Formula& f) {
  return discrete_robustness_at(samples, f, 0);
}

}  // namespace ctstl
