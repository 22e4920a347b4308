// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "ctstl/cli.hpp"
#include "ctstl/errors.hpp"
#include "formula_cases.hpp"
#include "oracles.hpp"
#include "random_models.hpp"
#include "systems.hpp"

using namespace ctstl;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const Error& e) {
    o = {false, std::string("error [") + e.stage() + "]: " + e.what()};
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  failures += o.pass ? 0 : 1;
  std::printf("%s %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

RunReport plan(const std::string& name) { return run_plan(parse_scenario(bundled_text(name))); }

double plan_seconds(const RunReport& r) { return r.encode_seconds + r.solve_seconds; }

const FormulaReport* find_report(const RunReport& r, const std::string& text) {
  for (const auto& v : r.verdicts) {
    if (v.text == text) return &v;
  }
  return nullptr;
}

// Every planner output seen by this run, for the continuous => discrete check.
std::vector<RunReport> outputs;

Outcome example1() {
  RunReport r = plan("example1");
  const double secs = plan_seconds(r);
  if (!r.feasible()) return {false, std::string("status ") + to_string(r.solution.status)};
  const auto* safety = find_report(r, "G[0,2](x2 > -10 & x2 < 10)");
  const double phi = r.verdicts[0].report.continuous.worst_margin;
  const double vel = safety ? safety->report.continuous.worst_margin : -kInfinity;
  double peak = 0.0;
  for (const auto& s : dense_samples(*r.trajectory, 1e-3)) peak = std::max(peak, std::abs(s.x(1)));
  const bool ok = phi >= -kViolationTol && vel >= -kViolationTol && peak < 10.0 + kViolationTol &&
                  secs <= 30.0;
  outputs.push_back(std::move(r));
  return {ok, "phi1 margin " + fmt("%.3g", phi) + ", |x2| margin " + fmt("%.3g", vel) +
                  ", max |x2| on 1e-3 grid " + fmt("%.6g", peak) + ", solve " +
                  fmt("%.2f s", secs)};
}

Outcome example2() {
  const std::string safety = "G[0,1](x1 >= 0 | x3 >= 0)";
  RunReport c1 = plan("example2_case1");
  RunReport c2 = plan("example2_case2");
  const double s1 = plan_seconds(c1);
  const double s2 = plan_seconds(c2);
  if (!c1.feasible() || !c2.feasible()) {
    return {false, std::string("case 1 ") + to_string(c1.solution.status) + ", case 2 " +
                       to_string(c2.solution.status)};
  }
  double node_min = kInfinity;
  for (const auto& x : c1.trajectory->states) node_min = std::min(node_min, std::max(x(0), x(2)));
  const auto* r1 = find_report(c1, safety);
  const auto* r2 = find_report(c2, safety);
  const bool case1 = r1 && c1.verdicts[0].report.discrete_robustness >= -kViolationTol &&
                     node_min >= -kViolationTol && !r1->report.continuous.satisfied &&
                     r1->report.gap == GapClass::DiscreteOnlySatisfied && s1 <= 60.0;
  const bool case2 = r2 && c2.satisfied() && r2->report.gap == GapClass::Consistent && s2 <= 60.0;
  std::string d = "case 1: node min " + fmt("%.3g", node_min) + ", continuous " +
                  fmt("%.4g", r1 ? r1->report.continuous.worst_margin : NAN) + " at t=" +
                  fmt("%.4g", r1 ? r1->report.continuous.witness_time : NAN) + ", " +
                  fmt("%.1f s", s1) + "; case 2: continuous " +
                  fmt("%.4g", r2 ? r2->report.continuous.worst_margin : NAN) + ", " +
                  fmt("%.1f s", s2);
  outputs.push_back(std::move(c1));
  outputs.push_back(std::move(c2));
  return {case1 && case2, d};
}

Outcome example3() {
  RunReport r = plan("example3");
  const double secs = plan_seconds(r);
  if (!r.feasible()) return {false, std::string("status ") + to_string(r.solution.status)};
  const TimeGrid& g = r.trajectory->grid;
  std::vector<double> virt;
  for (int k = 0; k < g.size(); ++k) {
    if (g.is_virtual(k)) virt.push_back(g.time(k));
  }
  const bool one_virtual = virt.size() == 1 && std::abs(virt[0] - 0.63) < 1e-12;
  const auto* window = find_report(r, "G[0.63,0.8](x2 >= 3)");
  const bool ok = one_virtual && r.control_ties == 1 && window &&
                  window->report.continuous.satisfied && r.satisfied() && secs <= 30.0;
  return {ok, std::to_string(virt.size()) + " virtual node(s)" +
                  (virt.empty() ? "" : " at " + fmt("%.6g", virt[0])) + ", " +
                  std::to_string(r.control_ties) + " tie(s), G[0.63,0.8] margin " +
                  fmt("%.3g", window ? window->report.continuous.worst_margin : NAN) +
                  ", solve " + fmt("%.2f s", secs)};
}

Outcome solver_vs_enumeration() {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> nb(1, 8);
  int agree = 0;
  int infeasible = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const MiqpModel m = testing_models::random_miqp(rng, nb(rng));
    const Solution s = branch_and_bound(m);
    const auto e = testing_models::enumerate_binaries(m);
    const bool feasible = s.status == SolveStatus::Optimal;
    if (feasible != e.feasible || s.status == SolveStatus::IterLimit) continue;
    if (!feasible) {
      ++infeasible;
      ++agree;
      continue;
    }
    const double gap = std::abs(s.objective - e.objective);
    worst = std::max(worst, gap);
    if (gap <= 1e-6) ++agree;
  }
  return {agree == 50, std::to_string(agree) + "/50 agree (" + std::to_string(infeasible) +
                           " infeasible), worst objective gap " + fmt("%.2e", worst)};
}

Outcome window_bounds() {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> coef(-3, 3), lam(-4, 4), tau(0.01, 2);
  std::uniform_int_distribution<int> pw(0, 3);
  int term_fail = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double c = coef(rng), l = lam(rng), t = tau(rng);
    const int j = pw(rng);
    const auto [v, arg] = term_window_min(c, l, j, t);
    const auto [dense, darg] =
        oracle::dense_min([&](double s) { return c * std::exp(l * s) * std::pow(s, j); }, t, 10000);
    const double err = std::abs(v - dense) / (1 + std::abs(c));
    worst = std::max(worst, err);
    if (err > 1e-8 || v > dense + 1e-12) ++term_fail;
  }

  std::uniform_real_distribution<double> d(-1, 1), margin(0.05, 1.0), step(0.1, 0.5),
      cost(-20, 20);
  int windows = 0;
  int violations = 0;
  int problems = 0;
  while (windows < 200 && problems < 400) {
    ++problems;
    const auto sys = testing_systems::random_real_system(rng);
    Problem p;
    p.system = sys;
    p.x0 = Vector::NullaryExpr(2, [&] { return d(rng); });
    Predicate h;
    h.row = RowVector::NullaryExpr(2, [&] { return d(rng); });
    h.offset = -h.row.dot(p.x0) + margin(rng);
    const int n = 4;
    const double tf = n * step(rng);
    Formula g = Formula::always(0.0, tf, Formula::predicate(h));
    g.cbf = CbfSettings{};
    p.formula = g;
    p.grid = TimeGrid::uniform(tf, n);
    p.config.u_lower = Vector::Constant(1, -5);
    p.config.u_upper = Vector::Constant(1, 5);
    Encoding enc = build_miqp(p);
    for (const auto& uk : enc.u) enc.model.add_linear_objective(uk[0], cost(rng));
    const Solution s = branch_and_bound(enc.model);
    if (s.values.empty()) continue;
    const Trajectory traj = Trajectory::from_solution(enc, s.values);
    const AuditReport a = cbf_bound_report(traj, enc, s.values);
    windows += static_cast<int>(a.windows.size());
    violations += a.violations;
  }
  const bool ok = term_fail == 0 && windows >= 200 && violations == 0;
  return {ok, std::to_string(term_fail) + "/1000 term minima off (worst scaled error " +
                  fmt("%.2e", worst) + "), " + std::to_string(violations) + " violations in " +
                  std::to_string(windows) + " audited windows"};
}

Outcome dynamics() {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> e(-2, 2), dt(0.01, 1.0);
  std::uniform_int_distribution<int> dim(1, 4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = dim(rng);
    const int m = dim(rng);
    const Matrix a = Matrix::NullaryExpr(n, n, [&] { return e(rng); });
    const Matrix b = Matrix::NullaryExpr(n, m, [&] { return e(rng); });
    const Vector x0 = Vector::NullaryExpr(n, [&] { return e(rng); });
    const Vector u = Vector::NullaryExpr(m, [&] { return e(rng); });
    const double h = dt(rng);
    const StepMatrices s = step_matrices(LinearSystem(a, b), h);
    const Vector ref = oracle::rk4_adaptive(a, b, x0, u, h, 1e-12);
    worst = std::max(worst, (s.ad * x0 + s.bd * u - ref).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8, "worst deviation from adaptive RK4 " + fmt("%.2e", worst)};
}

Outcome semantics() {
  std::mt19937 rng(4242);
  int agree = 0;
  int sat = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 2;
    const int samples = 2 + trial % 8;  // N = samples - 1 <= 8
    const double step = 0.25;
    const Formula f = testing_formulas::random_formula(rng, n, 3, samples - 1, step);
    const auto xs = testing_formulas::random_trace(rng, n, samples);
    const double rho = discrete_robustness(testing_formulas::as_samples(xs, step), f);
    const auto status = testing_formulas::satisfiability_on_trace(f, xs, step);
    if (status != SolveStatus::IterLimit &&
        (status == SolveStatus::Optimal) == (rho >= -kViolationTol)) {
      ++agree;
    }
    sat += status == SolveStatus::Optimal;
  }

  // Planner outputs: the bundled examples above plus random plans.
  std::uniform_real_distribution<double> d(-1, 1);
  int random_plans = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n_int = 2 + trial % 7;
    const double step = 0.25;
    Scenario s;
    s.name = "random";
    s.system = testing_systems::double_integrator();
    s.x0 = Vector::NullaryExpr(2, [&] { return d(rng); });
    s.formula = to_string(testing_formulas::random_formula(rng, 2, 3, n_int, step));
    s.cbf = CbfSettings{};
    s.t_final = step * n_int;
    s.intervals = n_int;
    s.config.u_lower = Vector::Constant(1, -10);
    s.config.u_upper = Vector::Constant(1, 10);
    s.solver.time_limit = 10.0;
    RunReport r = run_plan(s);
    if (!r.feasible()) continue;
    ++random_plans;
    outputs.push_back(std::move(r));
  }
  int checked = 0;
  int broken = 0;
  for (const auto& r : outputs) {
    for (const auto& v : r.verdicts) {
      ++checked;
      if (v.report.continuous.satisfied && v.report.discrete_robustness < -kViolationTol) ++broken;
    }
  }
  const bool ok = agree == 200 && broken == 0;
  return {ok, std::to_string(agree) + "/200 encodings agree with discrete robustness (" +
                  std::to_string(sat) + " satisfiable); " + std::to_string(broken) +
                  " continuous-only verdicts among " + std::to_string(checked) + " from " +
                  std::to_string(outputs.size()) + " planner outputs (" +
                  std::to_string(random_plans) + " random)"};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion("example1 reproduction", example1);
  criterion("example2 contrast", example2);
  criterion("example3 reproduction", example3);
  criterion("solver vs enumeration", solver_vs_enumeration);
  criterion("window bounds", window_bounds);
  criterion("dynamics exactness", dynamics);
  criterion("semantics consistency", semantics);
  const double total = since(t0);
  criterion("suite duration", [&] {
    return Outcome{total <= 900.0, fmt("%.1f s of 900 s", total)};
  });
  return failures == 0 ? 0 : 1;
}
