#include "ctstl/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "ctstl/errors.hpp"

namespace ctstl {

namespace {

constexpr int kBracketPoints = 1000;
constexpr int kFallbackPoints = 10000;
constexpr double kTimeResolution = 1e-12;

struct Expansion {
  double sigma = 0.0;
  std::vector<double> lambda;
  std::vector<int> power;
  std::vector<double> coef;

  Expansion(const ModeDecomposition& d, const Vector& x0, const Vector& u0) : sigma(d.sigma) {
    for (const auto& t : d.terms) {
      double c = t.state_coeff.size() ? t.state_coeff.dot(x0) : 0.0;
      if (t.input_coeff.size() && u0.size()) c += t.input_coeff.dot(u0);
      if (c == 0.0) continue;
      lambda.push_back(t.lambda);
      power.push_back(t.power);
      coef.push_back(c);
    }
  }

  double value(double t) const {
    double v = sigma;
    for (std::size_t i = 0; i < coef.size(); ++i) {
      v += coef[i] * std::exp(lambda[i] * t) * std::pow(t, power[i]);
    }
    return v;
  }

  double slope(double t) const {
    double v = 0.0;
    for (std::size_t i = 0; i < coef.size(); ++i) {
      const int j = power[i];
      double d = lambda[i] * std::pow(t, j);
      if (j > 0) d += j * std::pow(t, j - 1);
      v += coef[i] * std::exp(lambda[i] * t) * d;
    }
    return v;
  }
};

// Minimum over [lo, hi]: endpoints, bracket samples and bisected roots of the
// derivative.
WindowMin expansion_min(const Expansion& e, double lo, double hi) {
  WindowMin best{e.value(lo), lo};
  const auto offer = [&](double t) {
    const double v = e.value(t);
    if (v < best.value) best = {v, t};
  };
  offer(hi);
  if (hi - lo <= 0.0 || e.coef.empty()) return best;
  const double h = (hi - lo) / kBracketPoints;
  double ta = lo;
  double sa = e.slope(ta);
  for (int i = 1; i <= kBracketPoints; ++i) {
    const double tb = i == kBracketPoints ? hi : lo + i * h;
    const double sb = e.slope(tb);
    offer(tb);
    if (sa < 0.0 && sb >= 0.0) {
      double a = ta;
      double b = tb;
      while (b - a > kTimeResolution) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        (e.slope(m) < 0.0 ? a : b) = m;
      }
      offer(a);
      offer(b);
    }
    ta = tb;
    sa = sb;
  }
  return best;
}

// Golden-section refinement of f around a sampled minimum.
template <typename F>
WindowMin refine_min(const F& f, double lo, double hi, WindowMin start) {
  constexpr double r = 0.6180339887498949;
  double a = lo;
  double b = hi;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 80 && b - a > kTimeResolution; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  if (fc < start.value) start = {fc, c};
  if (fd < start.value) start = {fd, d};
  return start;
}

WindowMin sampled_min(const Interpolant& ip, const Predicate& pred, double lo, double hi) {
  const auto f = [&](double t) { return pred.value(ip.at(t)); };
  WindowMin best{f(lo), lo};
  const double h = (hi - lo) / kFallbackPoints;
  int arg = 0;
  for (int i = 1; i <= kFallbackPoints; ++i) {
    const double t = i == kFallbackPoints ? hi : lo + i * h;
    const double v = f(t);
    if (v < best.value) {
      best = {v, t};
      arg = i;
    }
  }
  if (hi <= lo) return best;
  return refine_min(f, lo + std::max(0, arg - 1) * h, lo + std::min(kFallbackPoints, arg + 1) * h,
                    best);
}

std::shared_ptr<const ModeDecomposition> try_decompose(const LinearSystem& sys,
                                                       const Predicate& pred) {
  try {
    return std::make_shared<const ModeDecomposition>(
        mode_decompose(sys, pred.row, pred.offset));
  } catch (const ComplexModesUnsupported&) {
    return nullptr;
  } catch (const DecompositionUnstable&) {
    return nullptr;
  }
}

WindowMin window_min_with(const ModeDecomposition* d, const Interpolant& ip,
                          const Predicate& pred, double from, double to) {
  const double lo = std::max(from, ip.t_start());
  const double hi = std::max(lo, std::min(to, ip.t_end()));
  if (!d) return sampled_min(ip, pred, lo, hi);
  const Expansion e(*d, ip.x_start(), ip.u());
  WindowMin m = expansion_min(e, lo - ip.t_start(), hi - ip.t_start());
  m.t += ip.t_start();
  return m;
}

}  // namespace

Trajectory Trajectory::from_solution(const Encoding& enc, const std::vector<double>& values) {
  Trajectory t;
  t.system = enc.system;
  t.grid = enc.grid;
  for (std::size_t k = 0; k < enc.x.size(); ++k) {
    Vector x(enc.x[k].size());
    for (std::size_t i = 0; i < enc.x[k].size(); ++i) {
      x(i) = enc.x[k][i] >= 0 ? values.at(enc.x[k][i]) : enc.x0(i);
    }
    if (k == 0) x = enc.x0;
    t.states.push_back(std::move(x));
  }
  for (const auto& cols : enc.u) {
    Vector u(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) u(i) = values.at(cols[i]);
    t.controls.push_back(std::move(u));
  }
  // A tied window replays its source control exactly.
  auto ties = enc.ties;
  std::sort(ties.begin(), ties.end(),
            [](const ControlTie& a, const ControlTie& b) { return a.window < b.window; });
  for (const auto& tie : ties) t.controls.at(tie.window) = t.controls.at(tie.source);
  return t;
}

Interpolant Trajectory::interpolant(int k) const {
  return Interpolant(system, grid.time(k), grid.time(k + 1), states.at(k), controls.at(k));
}

Vector Trajectory::at(double t) const {
  if (auto k = grid.index_of(t, 0.0)) return states.at(*k);
  return interpolant(grid.interval_containing(t)).at(t);
}

double Trajectory::shooting_defect() const {
  double worst = 0.0;
  for (int k = 0; k < grid.intervals(); ++k) {
    const StepMatrices s = step_matrices(*system, grid.interval_length(k));
    const Vector next = s.ad * states[k] + s.bd * controls[k];
    worst = std::max(worst, (next - states[k + 1]).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

std::vector<Sample> Trajectory::node_samples() const {
  std::vector<Sample> out;
  for (int k = 0; k < grid.size(); ++k) out.push_back({grid.time(k), states[k]});
  return out;
}

WindowMin window_predicate_min(const Interpolant& ip, const Predicate& pred) {
  return window_predicate_min(ip, pred, ip.t_start(), ip.t_end());
}

WindowMin window_predicate_min(const Interpolant& ip, const Predicate& pred, double from,
                               double to) {
  const auto d = try_decompose(ip.system(), pred);
  return window_min_with(d.get(), ip, pred, from, to);
}

WindowMin decomposition_window_min(const ModeDecomposition& d, const Vector& x0,
                                   const Vector& u0, double tau) {
  return expansion_min(Expansion(d, x0, u0), 0.0, tau);
}

std::vector<WindowMin> predicate_window_minima_serial(const Trajectory& traj,
                                                      const Predicate& pred) {
  const auto d = try_decompose(*traj.system, pred);
  std::vector<WindowMin> out(traj.grid.intervals());
  for (int k = 0; k < traj.grid.intervals(); ++k) {
    const Interpolant ip = traj.interpolant(k);
    out[k] = window_min_with(d.get(), ip, pred, ip.t_start(), ip.t_end());
  }
  return out;
}

std::vector<WindowMin> predicate_window_minima(const Trajectory& traj, const Predicate& pred) {
  const auto d = try_decompose(*traj.system, pred);
  const int n = traj.grid.intervals();
  std::vector<WindowMin> out(n);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < n; ++k) {
    const Interpolant ip = traj.interpolant(k);
    out[k] = window_min_with(d.get(), ip, pred, ip.t_start(), ip.t_end());
  }
  return out;
}

namespace {

struct Eval {
  double value;
  double t;
};

bool is_state_formula(const Formula& f) {
  switch (f.kind) {
    case FormulaKind::True:
    case FormulaKind::Pred:
      return true;
    case FormulaKind::Not:
    case FormulaKind::And:
    case FormulaKind::Or:
      return std::all_of(f.children.begin(), f.children.end(), is_state_formula);
    default:
      return false;
  }
}

class ContinuousEvaluator {
 public:
  ContinuousEvaluator(const Trajectory& traj, const MonitorOptions& opt)
      : traj_(traj), opt_(opt) {
    if (!(opt.dense_step > 0.0)) throw InvalidConfig("dense step must be positive");
  }

  Eval eval(const Formula& f, double t) {
    auto& memo = memo_[&f];
    const long long key = std::llround(t * 1e9);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const Eval r = compute(f, t);
    memo.emplace(key, r);
    return r;
  }

 private:
  double pred_value(const Formula& f, double t) {
    const ModeDecomposition* d = decomposition(f);
    const int k = traj_.grid.interval_containing(t);
    if (auto node = traj_.grid.index_of(t, 0.0)) return f.pred.value(traj_.states[*node]);
    if (!d) return f.pred.value(traj_.at(t));
    return Expansion(*d, traj_.states[k], traj_.controls[k]).value(t - traj_.grid.time(k));
  }

  const ModeDecomposition* decomposition(const Formula& f) {
    auto it = decomp_.find(&f);
    if (it == decomp_.end()) it = decomp_.emplace(&f, try_decompose(*traj_.system, f.pred)).first;
    return it->second.get();
  }

  // Exact infimum of a predicate over [lo, hi].
  Eval pred_inf(const Formula& f, double lo, double hi) {
    const ModeDecomposition* d = decomposition(f);
    Eval best{pred_value(f, lo), lo};
    const int k0 = traj_.grid.interval_containing(lo);
    const int k1 = traj_.grid.interval_containing(hi);
    for (int k = k0; k <= k1; ++k) {
      const Interpolant ip = traj_.interpolant(k);
      const WindowMin m = window_min_with(d, ip, f.pred, lo, hi);
      if (m.value < best.value) best = {m.value, m.t};
    }
    return best;
  }

  // Always distributes over conjunction, so conjunctions of predicates stay
  // exact.
  std::optional<Eval> exact_inf(const Formula& f, double lo, double hi) {
    if (f.kind == FormulaKind::Pred) return pred_inf(f, lo, hi);
    if (f.kind == FormulaKind::True) return Eval{kMarginCap, lo};
    if (f.kind != FormulaKind::And) return std::nullopt;
    Eval best{kMarginCap, lo};
    for (const auto& c : f.children) {
      const auto e = exact_inf(c, lo, hi);
      if (!e) return std::nullopt;
      if (e->value < best.value) best = *e;
    }
    return best;
  }

  std::vector<double> scan_times(double lo, double hi) const {
    std::vector<double> ts;
    const double h = opt_.dense_step;
    const long first = static_cast<long>(std::ceil(lo / h - 1e-9));
    const long last = static_cast<long>(std::floor(hi / h + 1e-9));
    ts.push_back(lo);
    for (long i = first; i <= last; ++i) {
      const double t = static_cast<double>(i) * h;
      if (t > lo && t < hi) ts.push_back(t);
    }
    for (double node : traj_.grid.nodes()) {
      if (node > lo && node < hi) ts.push_back(node);
    }
    ts.push_back(hi);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    return ts;
  }

  // sign = +1 for infimum, -1 for supremum.
  Eval scan(const Formula& f, double lo, double hi, double sign) {
    if (sign > 0) {
      if (auto e = exact_inf(f, lo, hi)) return *e;
    }
    const std::vector<double> ts = scan_times(lo, hi);
    std::size_t arg = 0;
    Eval best = eval(f, ts[0]);
    for (std::size_t i = 1; i < ts.size(); ++i) {
      const Eval e = eval(f, ts[i]);
      if (sign * e.value < sign * best.value) {
        best = e;
        arg = i;
      }
    }
    if (!is_state_formula(f) || ts.size() < 2) return best;
    const double a = ts[arg == 0 ? 0 : arg - 1];
    const double b = ts[std::min(arg + 1, ts.size() - 1)];
    const auto g = [&](double t) { return sign * compute(f, t).value; };
    const WindowMin r = refine_min(g, a, b, {sign * best.value, best.t});
    if (r.value < sign * best.value) best = {sign * r.value, r.t};
    return best;
  }

  Eval compute(const Formula& f, double t) {
    switch (f.kind) {
      case FormulaKind::True:
        return {kMarginCap, t};
      case FormulaKind::Pred:
        return {pred_value(f, t), t};
      case FormulaKind::Not: {
        const Eval e = eval(f.children[0], t);
        return {-e.value, e.t};
      }
      case FormulaKind::And:
      case FormulaKind::Or: {
        const double sign = f.kind == FormulaKind::And ? 1.0 : -1.0;
        Eval best = eval(f.children[0], t);
        for (std::size_t i = 1; i < f.children.size(); ++i) {
          const Eval e = eval(f.children[i], t);
          if (sign * e.value < sign * best.value) best = e;
        }
        return best;
      }
      case FormulaKind::Always:
        return scan(f.children[0], t + f.lo, t + f.hi, 1.0);
      case FormulaKind::Eventually:
        return scan(f.children[0], t + f.lo, t + f.hi, -1.0);
      case FormulaKind::Until: {
        // sup over t' of min(rho(rhs, t'), inf over [t, t'] of rho(lhs)).
        const std::vector<double> ts = scan_times(t, t + f.hi);
        Eval running{kMarginCap, t};
        Eval best{-kMarginCap, t};
        for (double s : ts) {
          const Eval l = eval(f.children[0], s);
          if (l.value < running.value) running = l;
          if (s < t + f.lo - 1e-12) continue;
          const Eval r = eval(f.children[1], s);
          const Eval cand = r.value < running.value ? r : running;
          if (cand.value > best.value) best = cand;
        }
        return best;
      }
    }
    return {kMarginCap, t};
  }

  const Trajectory& traj_;
  MonitorOptions opt_;
  std::unordered_map<const Formula*, std::unordered_map<long long, Eval>> memo_;
  std::unordered_map<const Formula*, std::shared_ptr<const ModeDecomposition>> decomp_;
};

double clamp_margin(double v) { return std::clamp(v, -kMarginCap, kMarginCap); }

}  // namespace

double continuous_robustness(const Trajectory& traj, const Formula& f, double t,
                             const MonitorOptions& options) {
  if (t + horizon(f) > traj.grid.t_final() + 1e-9) {
    throw InsufficientTrace("formula horizon " + std::to_string(t + horizon(f)) +
                            " exceeds the trajectory end " +
                            std::to_string(traj.grid.t_final()));
  }
  ContinuousEvaluator ev(traj, options);
  return clamp_margin(ev.eval(f, t).value);
}

Verdict check_continuous(const Trajectory& traj, const Formula& f, const MonitorOptions& options) {
  if (horizon(f) > traj.grid.t_final() + 1e-9) {
    throw InsufficientTrace("formula horizon " + std::to_string(horizon(f)) +
                            " exceeds the trajectory end " +
                            std::to_string(traj.grid.t_final()));
  }
  ContinuousEvaluator ev(traj, options);
  const Eval e = ev.eval(f, 0.0);
  Verdict v;
  v.worst_margin = clamp_margin(e.value);
  v.witness_time = e.t;
  v.satisfied = v.worst_margin >= -kViolationTol;
  const std::vector<Sample> samples = traj.node_samples();
  const double h = horizon(f);
  for (int k = 0; k < traj.grid.size(); ++k) {
    if (traj.grid.time(k) + h > traj.grid.t_final() + 1e-9) break;
    v.nodes.push_back({traj.grid.time(k), discrete_robustness_at(samples, f, k)});
  }
  return v;
}

const char* to_string(GapClass c) {
  switch (c) {
    case GapClass::Consistent:
      return "consistent";
    case GapClass::DiscreteOnlySatisfied:
      return "discrete-only-satisfied";
    case GapClass::BothViolated:
      return "both-violated";
    case GapClass::ContinuousOnlySatisfied:
      return "continuous-only-satisfied";
  }
  return "unknown";
}

GapReport compare_discrete_continuous(const Trajectory& traj, const Formula& f,
                                      const MonitorOptions& options) {
  GapReport r;
  r.continuous = check_continuous(traj, f, options);
  r.discrete_robustness = clamp_margin(discrete_robustness(traj.node_samples(), f));
  const bool disc = r.discrete_robustness >= -kViolationTol;
  if (disc && r.continuous.satisfied) {
    r.gap = GapClass::Consistent;
  } else if (disc) {
    r.gap = GapClass::DiscreteOnlySatisfied;
  } else if (r.continuous.satisfied) {
    r.gap = GapClass::ContinuousOnlySatisfied;
  } else {
    r.gap = GapClass::BothViolated;
  }
  return r;
}

namespace {

WindowAudit audit_window(const Trajectory& traj, const CbfWindow& w,
                         const std::vector<double>& values) {
  WindowAudit a;
  a.tag = w.tag;
  a.window = w.window;
  a.active = w.gate.value(values) > 0.5;
  a.encoded_min = encoded_window_min(w, values);
  if (!w.certificate.zeta) {
    a.true_min = a.encoded_min;
    a.true_min_time = 0.0;
    a.ok = true;
    return a;
  }
  const WindowMin m = decomposition_window_min(*w.certificate.zeta, traj.states[w.window],
                                               traj.controls[w.window], w.tau);
  a.true_min = m.value;
  a.true_min_time = m.t;
  a.ok = a.encoded_min <= a.true_min + 1e-9 && (!a.active || a.true_min >= -kViolationTol);
  return a;
}

}  // namespace

AuditReport cbf_bound_report(const Trajectory& traj, const Encoding& enc,
                             const std::vector<double>& values) {
  AuditReport rep;
  rep.windows.resize(enc.windows.size());
  const int n = static_cast<int>(enc.windows.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < n; ++i) rep.windows[i] = audit_window(traj, enc.windows[i], values);
  for (const auto& a : rep.windows) rep.violations += a.ok ? 0 : 1;
  return rep;
}

AuditReport cbf_bound_report_serial(const Trajectory& traj, const Encoding& enc,
                                    const std::vector<double>& values) {
  AuditReport rep;
  for (const auto& w : enc.windows) {
    rep.windows.push_back(audit_window(traj, w, values));
    rep.violations += rep.windows.back().ok ? 0 : 1;
  }
  return rep;
}

AuditReport cbf_bound_audit(const Trajectory& traj, const Encoding& enc,
                            const std::vector<double>& values) {
  AuditReport rep = cbf_bound_report(traj, enc, values);
  if (rep.violations == 0) return rep;
  std::ostringstream msg;
  msg << rep.violations << " window bound violation(s):";
  for (const auto& a : rep.windows) {
    if (a.ok) continue;
    msg << " [" << a.tag << " window " << a.window << " encoded " << a.encoded_min << " true "
        << a.true_min << (a.active ? " active" : "") << "]";
  }
  throw BoundViolation(msg.str());
}

}  // namespace ctstl
