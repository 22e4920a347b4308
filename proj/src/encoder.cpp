#include "ctstl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ctstl/errors.hpp"

namespace ctstl {

namespace {

constexpr double kTimeTol = 1e-9;

struct Range {
  double lo;
  double hi;
  double magnitude() const { return std::max(std::abs(lo), std::abs(hi)); }
};

Range row_range(const RowVector& c, const Vector& lo, const Vector& hi) {
  Range r{0.0, 0.0};
  for (int i = 0; i < c.size(); ++i) {
    if (c(i) == 0.0) continue;
    if (c(i) > 0) {
      r.lo += c(i) * lo(i);
      r.hi += c(i) * hi(i);
    } else {
      r.lo += c(i) * hi(i);
      r.hi += c(i) * lo(i);
    }
  }
  return r;
}

// M for a row whose relaxed side must absorb `needed`; never above the
// configured ceiling so an undersized M shows up in the binding audit.
double big_m_for(Encoding& enc, double needed) {
  const double want = std::max(needed, 0.0) * 1.01 + 1e-3;
  if (!std::isfinite(needed) || want > enc.config.big_m) {
    ++enc.capped_big_m;
    return enc.config.big_m;
  }
  return want;
}

using Terms = std::vector<std::pair<int, double>>;

void append_row(Terms& t, const std::vector<int>& cols, const RowVector& coeff, double scale) {
  for (int i = 0; i < coeff.size(); ++i) {
    if (coeff(i) != 0.0) t.emplace_back(cols[i], scale * coeff(i));
  }
}

// terms >= rhs, relaxed by M (1 - gate).
void add_gated(Encoding& enc, const std::string& name, Terms terms, double rhs,
               const Literal& gate, double big_m) {
  if (gate.is_constant()) {
    if (gate.constant < 0.5) return;
    enc.model.add_constraint(name, std::move(terms), Sense::Ge, rhs);
    return;
  }
  terms.emplace_back(gate.column, -big_m * gate.sign);
  enc.model.add_constraint(name, std::move(terms), Sense::Ge,
                           rhs - big_m * (1.0 - gate.constant), gate.column);
}

Vector input_bound(const EncodingConfig& cfg, int m, bool upper) {
  const Vector& v = upper ? cfg.u_upper : cfg.u_lower;
  if (v.size() == m) return v;
  return Vector::Constant(m, upper ? kInfinity : -kInfinity);
}

std::vector<double> default_poles(int r) {
  std::vector<double> p;
  for (int i = 0; i < r; ++i) p.push_back(-2.0 - i);
  return p;
}

Certificate certificate_from_ecbf(const LinearSystem& sys, const EcbfSpec& spec) {
  Certificate c;
  c.predicate = spec.h;
  c.mode = CbfMode::Ecbf;
  c.poles = spec.poles;
  c.zeta = std::make_shared<const ModeDecomposition>(
      mode_decompose(sys, spec.zeta_row, spec.zeta_offset, spec.zeta_input));
  Predicate h = spec.h;
  c.start_conditions.push_back(h);
  for (int l = 1; l < spec.relative_degree; ++l) {
    const double a = -spec.poles[l - 1];
    Predicate next;
    next.row = h.row * sys.a() + a * h.row;
    next.offset = a * h.offset;
    next.name = spec.h.name + "_h" + std::to_string(l);
    c.start_conditions.push_back(next);
    h = next;
  }
  return c;
}

}  // namespace

void EncodingConfig::validate(int inputs) const {
  if (!(big_m > 0.0) || !std::isfinite(big_m)) throw InvalidConfig("big_M must be positive");
  if (!(eps_strict >= 0.0)) throw InvalidConfig("eps_strict must be non-negative");
  const bool has_lo = u_lower.size() > 0;
  const bool has_hi = u_upper.size() > 0;
  if ((has_lo && u_lower.size() != inputs) || (has_hi && u_upper.size() != inputs)) {
    throw InvalidConfig("input bounds must have one entry per input");
  }
  if (has_lo && has_hi && (u_lower.array() > u_upper.array()).any()) {
    throw InvalidConfig("u_lower must not exceed u_upper");
  }
  for (double p : ecbf_poles) {
    if (!(p < 0.0)) throw InvalidConfig("ECBF poles must be negative");
  }
}

int relative_degree(const LinearSystem& sys, const RowVector& row) {
  const double scale = std::max(1.0, row.cwiseAbs().maxCoeff()) *
                       std::max(1.0, sys.b().cwiseAbs().maxCoeff());
  RowVector r = row;
  for (int k = 1; k <= sys.states(); ++k) {
    const RowVector lg = r * sys.b();
    if (lg.cwiseAbs().maxCoeff() > 1e-12 * scale) return k;
    r = r * sys.a();
  }
  throw NoRelativeDegree("the input never reaches this output");
}

EcbfSpec make_ecbf(const LinearSystem& sys, const Predicate& h, std::vector<double> poles) {
  EcbfSpec s;
  s.h = h;
  s.relative_degree = relative_degree(sys, h.row);
  const int r = s.relative_degree;
  if (poles.empty()) poles = default_poles(r);
  if (static_cast<int>(poles.size()) != r) {
    throw InvalidConfig("ECBF needs " + std::to_string(r) + " poles, got " +
                        std::to_string(poles.size()));
  }
  for (double p : poles) {
    if (!(p < 0.0)) throw InvalidConfig("ECBF poles must be negative");
  }
  s.poles = poles;
  // prod (s - p_i), lowest power first.
  std::vector<double> c{1.0};
  for (double p : poles) {
    std::vector<double> n(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      n[i + 1] += c[i];
      n[i] -= p * c[i];
    }
    c = n;
  }
  s.gains = RowVector(r);
  for (int l = 0; l < r; ++l) s.gains(l) = c[l];

  RowVector power = h.row;  // h.row A^l
  s.zeta_row = RowVector::Zero(sys.states());
  for (int l = 0; l < r; ++l) {
    s.zeta_row += s.gains(l) * power;
    if (l == r - 1) s.zeta_input = power * sys.b();
    power = power * sys.a();
  }
  s.zeta_row += power;
  s.zeta_offset = s.gains(0) * h.offset;
  return s;
}

TermWindowBound term_window_bound(double lambda, int power, double tau) {
  auto g = [&](double t) {
    return std::exp(lambda * t) * (power == 0 ? 1.0 : std::pow(t, power));
  };
  std::vector<double> cand{0.0, tau};
  if (lambda < 0.0 && power > 0) {
    const double tc = -power / lambda;
    if (tc > 0.0 && tc < tau) cand.push_back(tc);
  }
  TermWindowBound b{g(0.0), 0.0, g(0.0), 0.0};
  for (double t : cand) {
    const double v = g(t);
    if (v < b.g_min) {
      b.g_min = v;
      b.t_min = t;
    }
    if (v > b.g_max) {
      b.g_max = v;
      b.t_max = t;
    }
  }
  return b;
}

std::pair<double, double> term_window_min(double coef, double lambda, int power, double tau) {
  const auto b = term_window_bound(lambda, power, tau);
  return {b.min_value(coef), b.argmin(coef)};
}

Certificate make_certificate(const LinearSystem& sys, const Predicate& p,
                             const CbfSettings& settings, const EncodingConfig& cfg) {
  std::vector<double> poles = settings.poles.empty() ? cfg.ecbf_poles : settings.poles;
  switch (settings.mode) {
    case CbfMode::Direct: {
      Certificate c;
      c.predicate = p;
      c.mode = CbfMode::Direct;
      c.zeta = std::make_shared<const ModeDecomposition>(mode_decompose(sys, p.row, p.offset));
      c.start_conditions.push_back(p);
      return c;
    }
    case CbfMode::Zcbf: {
      const double pole = poles.empty() ? -2.0 : poles.front();
      if (!(pole < 0.0)) throw InvalidConfig("ZCBF gain pole must be negative");
      const double a = -pole;
      Certificate c;
      c.predicate = p;
      c.mode = CbfMode::Zcbf;
      c.poles = {pole};
      c.zeta = std::make_shared<const ModeDecomposition>(mode_decompose(
          sys, p.row * sys.a() + a * p.row, a * p.offset, p.row * sys.b()));
      c.start_conditions.push_back(p);
      return c;
    }
    case CbfMode::Ecbf: {
      if (!poles.empty()) {
        const int r = relative_degree(sys, p.row);
        if (static_cast<int>(poles.size()) > r) poles.resize(r);
      }
      return certificate_from_ecbf(sys, make_ecbf(sys, p, poles));
    }
  }
  throw InvalidConfig("unknown CBF mode");
}

AlignedGrid align_time_grid(const Formula& f, const TimeGrid& base) {
  std::vector<double> nodes = base.nodes();
  std::vector<bool> flags = base.virtual_flags();
  const double tf = base.t_final();
  for (int iter = 0;; ++iter) {
    if (iter > 64) throw InvalidGrid("virtual node insertion did not converge");
    TimeGrid g(nodes, flags);
    bool added = false;
    for (double e : absolute_endpoints(f, g)) {
      if (e < -kTimeTol || e > tf + kTimeTol) {
        throw EndpointOutOfRange("interval endpoint " + std::to_string(e) + " outside [0, " +
                                 std::to_string(tf) + "]");
      }
      if (g.index_of(e, kTimeTol)) continue;
      const auto pos = std::lower_bound(nodes.begin(), nodes.end(), e);
      flags.insert(flags.begin() + (pos - nodes.begin()), true);
      nodes.insert(pos, e);
      added = true;
    }
    if (!added) break;
  }
  AlignedGrid out{TimeGrid(nodes, flags), {}};
  int last_real = 0;
  for (int k = 0; k < out.grid.size(); ++k) {
    if (!out.grid.is_virtual(k)) {
      last_real = k;
    } else {
      out.ties.push_back({k, last_real});
    }
  }
  return out;
}

Encoding encode_dynamics(std::shared_ptr<const LinearSystem> sys, const Vector& x0,
                         const AlignedGrid& aligned, const EncodingConfig& cfg) {
  if (!sys) throw InvalidSystem("no system");
  const int n = sys->states();
  const int m = sys->inputs();
  if (x0.size() != n || !x0.allFinite()) throw InvalidConfig("x0 must be a finite n-vector");
  cfg.validate(m);
  Encoding enc;
  enc.system = sys;
  enc.grid = aligned.grid;
  enc.ties = aligned.ties;
  enc.config = cfg;
  enc.x0 = x0;
  const int windows = enc.grid.intervals();
  const Vector ulo = input_bound(cfg, m, false);
  const Vector uhi = input_bound(cfg, m, true);

  for (int k = 0; k <= windows; ++k) {
    std::vector<int> row;
    for (int i = 0; i < n; ++i) {
      const std::string name = "x_" + std::to_string(k) + "_" + std::to_string(i + 1);
      row.push_back(k == 0 ? enc.model.add_variable(name, x0(i), x0(i))
                           : enc.model.add_variable(name));
    }
    enc.x.push_back(std::move(row));
  }
  for (int k = 0; k < windows; ++k) {
    std::vector<int> row;
    for (int i = 0; i < m; ++i) {
      row.push_back(enc.model.add_variable("u_" + std::to_string(k) + "_" + std::to_string(i + 1),
                                           ulo(i), uhi(i)));
    }
    enc.u.push_back(std::move(row));
  }

  enc.x_lo.push_back(x0);
  enc.x_hi.push_back(x0);
  const Vector uc = (ulo.array().isFinite() && uhi.array().isFinite()).all()
                        ? Vector(0.5 * (ulo + uhi))
                        : Vector(Vector::Zero(m));
  const Vector ur = 0.5 * (uhi - ulo);
  for (int k = 0; k < windows; ++k) {
    const double tau = enc.grid.interval_length(k);
    const auto sm = step_matrices(*sys, tau);
    for (int i = 0; i < n; ++i) {
      Terms t{{enc.x[k + 1][i], 1.0}};
      for (int j = 0; j < n; ++j) {
        if (sm.ad(i, j) != 0.0) t.emplace_back(enc.x[k][j], -sm.ad(i, j));
      }
      for (int j = 0; j < m; ++j) {
        if (sm.bd(i, j) != 0.0) t.emplace_back(enc.u[k][j], -sm.bd(i, j));
      }
      enc.model.add_constraint("dyn_" + std::to_string(k) + "_" + std::to_string(i + 1),
                               std::move(t), Sense::Eq, 0.0);
    }
    for (int j = 0; j < m; ++j) enc.model.add_quadratic(enc.u[k][j], enc.u[k][j], tau);

    const Vector c = 0.5 * (enc.x_lo[k] + enc.x_hi[k]);
    const Vector r = 0.5 * (enc.x_hi[k] - enc.x_lo[k]);
    const Vector nc = sm.ad * c + sm.bd * uc;
    Vector nr = sm.ad.cwiseAbs() * r;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        if (sm.bd(i, j) != 0.0) nr(i) += std::abs(sm.bd(i, j)) * ur(j);
      }
    }
    enc.x_lo.push_back(nc - nr);
    enc.x_hi.push_back(nc + nr);
  }
  for (const auto& tie : enc.ties) {
    for (int j = 0; j < m; ++j) {
      enc.model.add_constraint(
          "tie_" + std::to_string(tie.window) + "_" + std::to_string(j + 1),
          {{enc.u[tie.window][j], 1.0}, {enc.u[tie.source][j], -1.0}}, Sense::Eq, 0.0);
    }
  }
  return enc;
}

CbfWindow encode_cbf_window(Encoding& enc, const Certificate& cert, int k, Literal gate,
                            const std::string& tag) {
  CbfWindow win;
  win.tag = tag;
  win.window = k;
  win.tau = enc.grid.interval_length(k);
  win.certificate = cert;
  win.gate = gate;
  win.x_cols = enc.x[k];
  win.u_cols = enc.u[k];
  if (k == 0) win.x_fixed = enc.x0;
  if (gate.is_constant() && gate.constant < 0.5) return win;

  const auto& cfg = enc.config;
  const int m = enc.system->inputs();
  const Vector ulo = input_bound(cfg, m, false);
  const Vector uhi = input_bound(cfg, m, true);
  const ModeDecomposition& dec = *cert.zeta;
  double coef_scale = 1.0;
  for (const auto& t : dec.terms) {
    if (t.state_coeff.size()) coef_scale = std::max(coef_scale, t.state_coeff.cwiseAbs().maxCoeff());
    if (t.input_coeff.size()) coef_scale = std::max(coef_scale, t.input_coeff.cwiseAbs().maxCoeff());
  }

  Terms agg[2];
  double constant[2] = {dec.sigma, 0.0};
  double total = std::abs(dec.sigma);
  int term_index = 0;
  for (const auto& mt : dec.terms) {
    for (int part = 0; part < 2; ++part) {
      const RowVector& coeff = part == 0 ? mt.state_coeff : mt.input_coeff;
      if (coeff.size() == 0 || coeff.cwiseAbs().maxCoeff() <= 1e-13 * coef_scale) continue;
      const std::string base = tag + "_" + std::to_string(term_index++);
      CbfTerm ct;
      ct.input_part = part == 1;
      ct.lambda = mt.lambda;
      ct.power = mt.power;
      ct.coeff = coeff;
      ct.bound = term_window_bound(mt.lambda, mt.power, win.tau);
      const std::vector<int>& cols = part == 0 ? win.x_cols : win.u_cols;
      const Range er = part == 0 ? row_range(coeff, enc.x_lo[k], enc.x_hi[k])
                                 : row_range(coeff, ulo, uhi);
      total += er.magnitude() * ct.bound.g_max;
      const bool flat =
          ct.bound.g_max - ct.bound.g_min <= 1e-15 * std::max(1.0, ct.bound.g_max);
      if (part == 0 && k == 0) {
        constant[0] += ct.bound.min_value(coeff.dot(enc.x0));
      } else if (flat) {
        append_row(agg[part], cols, coeff, ct.bound.g_min);
      } else {
        const double wb = er.magnitude() * ct.bound.g_max;
        ct.w = std::isfinite(wb) ? enc.model.add_variable("w" + base, -wb, wb)
                                 : enc.model.add_variable("w" + base);
        auto hull = [&](double g, const std::string& name) {
          Terms t{{ct.w, 1.0}};
          append_row(t, cols, coeff, -g);
          enc.model.add_constraint(name, std::move(t), Sense::Le, 0.0);
        };
        if (er.lo >= 0.0) {
          hull(ct.bound.g_min, "lb" + base);
        } else if (er.hi <= 0.0) {
          hull(ct.bound.g_max, "lb" + base);
        } else {
          ct.z = enc.model.add_binary("zs" + base);
          Terms expr;
          append_row(expr, cols, coeff, 1.0);
          enc.model.set_sign_indicator(ct.z, std::move(expr));
          const double me = big_m_for(enc, er.magnitude());
          // z = 1 <=> coeff . v < 0.
          Terms s1;
          append_row(s1, cols, coeff, 1.0);
          s1.emplace_back(ct.z, me);
          enc.model.add_constraint("sgn" + base + "a", std::move(s1), Sense::Le, me, ct.z);
          Terms s2;
          append_row(s2, cols, coeff, -1.0);
          s2.emplace_back(ct.z, -me);
          enc.model.add_constraint("sgn" + base + "b", std::move(s2), Sense::Le, 0.0, ct.z);
          const double mw = big_m_for(enc, er.magnitude() * (ct.bound.g_max - ct.bound.g_min));
          Terms r0{{ct.w, 1.0}, {ct.z, -mw}};
          append_row(r0, cols, coeff, -ct.bound.g_min);
          enc.model.add_constraint("sel" + base + "a", std::move(r0), Sense::Le, 0.0, ct.z);
          Terms r1{{ct.w, 1.0}, {ct.z, mw}};
          append_row(r1, cols, coeff, -ct.bound.g_max);
          enc.model.add_constraint("sel" + base + "b", std::move(r1), Sense::Le, mw, ct.z);
          if (cfg.hull_cuts) {
            hull(ct.bound.g_min, "hull" + base + "a");
            hull(ct.bound.g_max, "hull" + base + "b");
          }
        }
        agg[part].emplace_back(ct.w, 1.0);
      }
      win.terms.push_back(std::move(ct));
    }
  }

  const double beta_bound = std::isfinite(total) ? total + 1.0 : kInfinity;
  win.beta_x = enc.model.add_variable("bx" + tag, -beta_bound, beta_bound);
  win.beta_u = enc.model.add_variable("bu" + tag, -beta_bound, beta_bound);
  enc.model.add_constraint("beta" + tag, {{win.beta_x, 1.0}, {win.beta_u, 1.0}}, Sense::Eq, 0.0);
  const double mg = big_m_for(enc, total);
  agg[0].emplace_back(win.beta_x, 1.0);
  agg[1].emplace_back(win.beta_u, 1.0);
  add_gated(enc, "zx" + tag, agg[0], -constant[0], gate, mg);
  add_gated(enc, "zu" + tag, agg[1], -constant[1], gate, mg);

  for (std::size_t s = 0; s < cert.start_conditions.size(); ++s) {
    const Predicate& p = cert.start_conditions[s];
    Terms t;
    append_row(t, win.x_cols, p.row, 1.0);
    const Range r = row_range(p.row, enc.x_lo[k], enc.x_hi[k]);
    add_gated(enc, "start" + tag + "_" + std::to_string(s), std::move(t), -p.offset, gate,
              big_m_for(enc, -(r.lo + p.offset)));
  }
  return win;
}

CbfWindow encode_ecbf(Encoding& enc, const EcbfSpec& spec, int k, Literal gate,
                      const std::string& tag) {
  return encode_cbf_window(enc, certificate_from_ecbf(*enc.system, spec), k, gate, tag);
}

namespace {

class FormulaEncoder {
 public:
  FormulaEncoder(Encoding& enc, const GroundedFormula& g) : enc_(enc), g_(g) {}

  Literal literal(int id, int t) {
    const auto key = std::make_pair(id, t);
    if (auto it = enc_.literals.find(key); it != enc_.literals.end()) return it->second;
    const Literal lit = build(id, t);
    enc_.literals.emplace(key, lit);
    return lit;
  }

 private:
  Literal build(int id, int t) {
    const GroundedNode& node = g_.nodes[id];
    switch (node.kind) {
      case FormulaKind::True:
        return Literal::fixed(true);
      case FormulaKind::Not:
        return literal(node.children[0], t).negated();
      case FormulaKind::Pred:
        return predicate(node, id, t);
      case FormulaKind::And:
      case FormulaKind::Or: {
        std::vector<Literal> parts;
        for (int c : node.children) parts.push_back(literal(c, t));
        return node.kind == FormulaKind::And ? conj(parts, id, t) : disj(parts, id, t);
      }
      case FormulaKind::Eventually:
      case FormulaKind::Always: {
        std::vector<Literal> parts;
        for (int s : node.targets.at(t)) parts.push_back(literal(node.children[0], s));
        if (node.kind == FormulaKind::Eventually) return disj(parts, id, t);
        const Literal lit = conj(parts, id, t);
        if (node.cbf) certify_always(node, id, t, lit);
        return lit;
      }
      case FormulaKind::Until: {
        std::vector<Literal> options;
        for (int s : node.targets.at(t)) {
          std::vector<Literal> parts{literal(node.children[1], s)};
          for (int r = t; r <= s; ++r) parts.push_back(literal(node.children[0], r));
          options.push_back(conj(parts, id, t));
        }
        return disj(options, id, t);
      }
    }
    return Literal::fixed(true);
  }

  Literal predicate(const GroundedNode& node, int id, int t) {
    const Predicate& p = node.pred;
    if (t == 0) return Literal::fixed(p.value(enc_.x0) >= 0.0);
    const Range r = row_range(p.row, enc_.x_lo[t], enc_.x_hi[t]);
    const double lo = r.lo + p.offset;
    const double hi = r.hi + p.offset;
    if (lo > 0.0) return Literal::fixed(true);
    if (hi < 0.0) return Literal::fixed(false);
    const std::string base = std::to_string(id) + "_" + std::to_string(t);
    const int z = enc_.model.add_binary("zp" + base);
    const double m1 = big_m_for(enc_, -lo);
    const double m2 = big_m_for(enc_, hi);
    // z = 1 => y >= 0 ; z = 0 => y <= 0.
    Terms a;
    append_row(a, enc_.x[t], p.row, 1.0);
    a.emplace_back(z, -m1);
    enc_.model.add_constraint("pa" + base, std::move(a), Sense::Ge, -p.offset - m1, z);
    Terms b;
    append_row(b, enc_.x[t], p.row, 1.0);
    b.emplace_back(z, -m2);
    enc_.model.add_constraint("pb" + base, std::move(b), Sense::Le, -p.offset, z);
    return Literal::of(z);
  }

  Literal conj(std::vector<Literal> parts, int id, int t) {
    std::vector<Literal> live;
    for (const auto& l : parts) {
      if (l.is_constant()) {
        if (l.constant < 0.5) return Literal::fixed(false);
      } else {
        live.push_back(l);
      }
    }
    if (live.empty()) return Literal::fixed(true);
    if (live.size() == 1) return live.front();
    const std::string base = std::to_string(id) + "_" + std::to_string(t) + "_" +
                             std::to_string(enc_.counter++);
    const int z = enc_.model.add_variable("zc" + base, 0.0, 1.0);
    Terms sum{{z, 1.0}};
    double c = 0.0;
    for (std::size_t i = 0; i < live.size(); ++i) {
      enc_.model.add_constraint("and" + base + "_" + std::to_string(i),
                                {{z, 1.0}, {live[i].column, -live[i].sign}}, Sense::Le,
                                live[i].constant);
      sum.emplace_back(live[i].column, -live[i].sign);
      c += live[i].constant;
    }
    enc_.model.add_constraint("and" + base, std::move(sum), Sense::Ge,
                              c - static_cast<double>(live.size() - 1));
    return Literal::of(z);
  }

  Literal disj(std::vector<Literal> parts, int id, int t) {
    std::vector<Literal> live;
    for (const auto& l : parts) {
      if (l.is_constant()) {
        if (l.constant > 0.5) return Literal::fixed(true);
      } else {
        live.push_back(l);
      }
    }
    if (live.empty()) return Literal::fixed(false);
    if (live.size() == 1) return live.front();
    const std::string base = std::to_string(id) + "_" + std::to_string(t) + "_" +
                             std::to_string(enc_.counter++);
    const int z = enc_.model.add_variable("zd" + base, 0.0, 1.0);
    Terms sum{{z, 1.0}};
    double c = 0.0;
    for (std::size_t i = 0; i < live.size(); ++i) {
      enc_.model.add_constraint("or" + base + "_" + std::to_string(i),
                                {{z, 1.0}, {live[i].column, -live[i].sign}}, Sense::Ge,
                                live[i].constant);
      sum.emplace_back(live[i].column, -live[i].sign);
      c += live[i].constant;
    }
    enc_.model.add_constraint("or" + base, std::move(sum), Sense::Le, c);
    return Literal::of(z);
  }

  bool certifiable(int id) const {
    const GroundedNode& n = g_.nodes[id];
    if (n.kind == FormulaKind::Pred || n.kind == FormulaKind::True) return true;
    if (n.kind != FormulaKind::And && n.kind != FormulaKind::Or) return false;
    return std::all_of(n.children.begin(), n.children.end(),
                       [&](int c) { return certifiable(c); });
  }

  void certify_always(const GroundedNode& node, int id, int t, const Literal& gate) {
    const int child = node.children[0];
    if (!certifiable(child)) {
      enc_.notes.push_back("G node " + std::to_string(id) +
                           " is not over a boolean combination of predicates; "
                           "no window certificate");
      return;
    }
    for (int k : node.windows.at(t)) {
      certify(child, *node.cbf, k, gate, std::to_string(id) + "_" + std::to_string(t));
    }
  }

  void certify(int id, const CbfSettings& settings, int k, const Literal& gate,
               const std::string& owner) {
    if (gate.is_constant() && gate.constant < 0.5) return;
    const GroundedNode& n = g_.nodes[id];
    switch (n.kind) {
      case FormulaKind::Pred: {
        const auto key = std::make_pair(id, static_cast<int>(settings.mode));
        auto it = certs_.find(key);
        if (it == certs_.end()) {
          it = certs_.emplace(key, make_certificate(*enc_.system, n.pred, settings,
                                                    enc_.config)).first;
        }
        const std::string tag = "_" + owner + "_" + std::to_string(id) + "_" + std::to_string(k);
        enc_.windows.push_back(encode_cbf_window(enc_, it->second, k, gate, tag));
        // A certified window forces the predicate at both of its nodes.
        if (gate.is_constant()) return;
        for (int s : {k, k + 1}) {
          const auto lit = enc_.literals.find({id, s});
          if (lit == enc_.literals.end() || lit->second.constant - 1.0 > -0.5) continue;
          Terms t{{gate.column, gate.sign}};
          if (!lit->second.is_constant()) t.emplace_back(lit->second.column, -lit->second.sign);
          enc_.model.add_constraint("imp" + tag + "_" + std::to_string(s), std::move(t),
                                    Sense::Le, lit->second.constant - gate.constant);
        }
        return;
      }
      case FormulaKind::And:
        for (int c : n.children) certify(c, settings, k, gate, owner);
        return;
      case FormulaKind::Or: {
        Terms sum;
        std::vector<int> gates;
        const std::string base = owner + "_" + std::to_string(id) + "_" + std::to_string(k);
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          gates.push_back(enc_.model.add_binary("zg" + base + "_" + std::to_string(i)));
          sum.emplace_back(gates.back(), 1.0);
        }
        double rhs = gate.constant;
        if (!gate.is_constant()) sum.emplace_back(gate.column, -gate.sign);
        enc_.model.add_constraint("gate" + base, std::move(sum), Sense::Ge, rhs);
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          certify(n.children[i], settings, k, Literal::of(gates[i]), owner);
        }
        return;
      }
      default:
        return;
    }
  }

  Encoding& enc_;
  const GroundedFormula& g_;
  std::map<std::pair<int, int>, Certificate> certs_;
};

}  // namespace

void encode_formula(Encoding& enc, const GroundedFormula& g) {
  enc.grounded = g;
  FormulaEncoder fe(enc, enc.grounded);
  enc.root = fe.literal(g.root, 0);
  if (enc.root.is_constant()) {
    if (enc.root.constant < 0.5) enc.model.add_constraint("root", {}, Sense::Ge, 1.0);
    return;
  }
  enc.model.add_constraint("root", {{enc.root.column, enc.root.sign}}, Sense::Eq,
                           1.0 - enc.root.constant);
}

Encoding build_miqp(const Problem& problem) {
  if (!problem.system) throw InvalidSystem("no system");
  problem.config.validate(problem.system->inputs());
  const Formula nnf = to_nnf(problem.formula, problem.config.eps_strict);
  const AlignedGrid aligned = align_time_grid(nnf, problem.grid);
  Encoding enc = encode_dynamics(problem.system, problem.x0, aligned, problem.config);
  enc.normalized = nnf;
  encode_formula(enc, ground(nnf, enc.grid));
  enc.model.validate();
  return enc;
}

double encoded_window_min(const CbfWindow& w, const std::vector<double>& values) {
  double total = w.certificate.zeta ? w.certificate.zeta->sigma : 0.0;
  for (const auto& t : w.terms) {
    const std::vector<int>& cols = t.input_part ? w.u_cols : w.x_cols;
    double e = 0.0;
    if (!t.input_part && w.x_fixed.size()) {
      e = t.coeff.dot(w.x_fixed);
    } else {
      for (int i = 0; i < t.coeff.size(); ++i) e += t.coeff(i) * values[cols[i]];
    }
    if (t.z >= 0) {
      total += std::lround(values[t.z]) == 1 ? e * t.bound.g_max : e * t.bound.g_min;
    } else {
      total += t.bound.min_value(e);
    }
  }
  return total;
}

}  // namespace ctstl
