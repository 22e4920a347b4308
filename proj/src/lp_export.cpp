#include <charconv>
#include <cmath>
#include <sstream>

#include "ctstl/miqp.hpp"

namespace ctstl {

namespace {

constexpr size_t kLineLimit = 200;

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Accumulates whitespace-separated tokens, wrapping long lines.
class LineWriter {
 public:
  explicit LineWriter(std::ostringstream& out) : out_(out) {}

  void start(const std::string& head) {
    line_ = head;
  }
  void token(const std::string& t) {
    if (line_.size() + 1 + t.size() > kLineLimit) {
      out_ << line_ << '\n';
      line_ = " ";
      line_ += t;
      return;
    }
    line_ += ' ';
    line_ += t;
  }
  void finish() {
    out_ << line_ << '\n';
    line_.clear();
  }

 private:
  std::ostringstream& out_;
  std::string line_;
};

// Emits "c name" with an explicit sign; `first` suppresses a leading '+'.
void signed_term(LineWriter& w, double coef, const std::string& name, bool first) {
  const double mag = std::abs(coef);
  std::string body = mag == 1.0 ? name : num(mag) + " " + name;
  if (coef < 0) {
    w.token("-");
  } else if (!first) {
    w.token("+");
  }
  w.token(body);
}

}  // namespace

std::string export_lp(const MiqpModel& model) {
  std::ostringstream out;
  LineWriter w(out);
  const auto& vars = model.variables();

  out << "Minimize\n";
  w.start(" obj:");
  bool first = true;
  for (int i = 0; i < model.num_variables(); ++i) {
    const double c = model.linear()[i];
    if (c == 0.0) continue;
    signed_term(w, c, vars[i].name, first);
    first = false;
  }
  bool any_quad = false;
  for (const auto& q : model.quadratic()) any_quad = any_quad || q.coef != 0.0;
  if (any_quad) {
    if (!first) w.token("+");
    w.token("[");
    bool qfirst = true;
    for (const auto& q : model.quadratic()) {
      if (q.coef == 0.0) continue;
      const std::string name = q.i == q.j ? vars[q.i].name + " ^ 2"
                                          : vars[q.i].name + " * " + vars[q.j].name;
      signed_term(w, 2.0 * q.coef, name, qfirst);
      qfirst = false;
    }
    w.token("]");
    w.token("/");
    w.token("2");
  }
  w.finish();

  out << "Subject To\n";
  for (const auto& r : model.constraints()) {
    w.start(" " + r.name + ":");
    if (r.terms.empty()) {
      w.token("0");
      w.token(vars.empty() ? "x" : vars.front().name);
    }
    bool rfirst = true;
    for (const auto& [col, coef] : r.terms) {
      signed_term(w, coef, vars[col].name, rfirst);
      rfirst = false;
    }
    w.token(r.sense == Sense::Le ? "<=" : r.sense == Sense::Ge ? ">=" : "=");
    w.token(num(r.rhs));
    w.finish();
  }

  std::ostringstream bounds;
  for (const auto& v : vars) {
    if (v.binary) continue;
    const bool lo_inf = std::isinf(v.lower);
    const bool hi_inf = std::isinf(v.upper);
    if (v.lower == 0.0 && hi_inf) continue;
    if (lo_inf && hi_inf) {
      bounds << ' ' << v.name << " free\n";
    } else if (v.lower == v.upper) {
      bounds << ' ' << v.name << " = " << num(v.lower) << '\n';
    } else if (lo_inf) {
      bounds << " -inf <= " << v.name << " <= " << num(v.upper) << '\n';
    } else if (hi_inf) {
      bounds << ' ' << v.name << " >= " << num(v.lower) << '\n';
    } else {
      bounds << ' ' << num(v.lower) << " <= " << v.name << " <= " << num(v.upper) << '\n';
    }
  }
  if (!bounds.str().empty()) out << "Bounds\n" << bounds.str();

  const auto bins = model.binaries();
  if (!bins.empty()) {
    out << "Binary\n";
    w.start("");
    for (int b : bins) w.token(vars[b].name);
    w.finish();
  }
  out << "End\n";
  return out.str();
}

}  // namespace ctstl
