#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctstl/errors.hpp"
#include "ctstl/monitor.hpp"
#include "formula_cases.hpp"
#include "systems.hpp"

using namespace ctstl;
using namespace testing_systems;

namespace {

Predicate state_pred(int n, int i, double sign, double offset) {
  Predicate p;
  p.row = RowVector::Zero(n);
  p.row(i) = sign;
  p.offset = offset;
  return p;
}

// Values of row x + offset at `samples` + 1 equally spaced points, stepped
// with a fixed one-step transition.
std::vector<double> stepped_values(const LinearSystem& sys, const Vector& x0, const Vector& u,
                                   const Predicate& p, double tau, int samples) {
  const StepMatrices s = step_matrices(sys, tau / samples);
  std::vector<double> out;
  Vector x = x0;
  out.push_back(p.value(x));
  for (int i = 0; i < samples; ++i) {
    x = s.ad * x + s.bd * u;
    out.push_back(p.value(x));
  }
  return out;
}

Trajectory rollout(std::shared_ptr<const LinearSystem> sys, const Vector& x0,
                   const std::vector<Vector>& controls, double step) {
  Trajectory t;
  t.system = sys;
  t.grid = TimeGrid::uniform(step * controls.size(), static_cast<int>(controls.size()));
  t.states.push_back(x0);
  for (std::size_t k = 0; k < controls.size(); ++k) {
    const StepMatrices s = step_matrices(*sys, t.grid.interval_length(static_cast<int>(k)));
    t.states.push_back(s.ad * t.states.back() + s.bd * controls[k]);
  }
  t.controls = controls;
  return t;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(WindowPredicateMin, Examples) {
  const auto di = double_integrator();
  const Predicate x1 = state_pred(2, 0, 1.0, 0.0);
  const auto a = window_predicate_min(Interpolant(di, 0.0, 2.0, vec({1, -1}), vec({0})), x1);
  EXPECT_NEAR(a.value, -1.0, 1e-12);
  EXPECT_NEAR(a.t, 2.0, 1e-12);

  Matrix zero = Matrix::Zero(2, 2);
  auto still = std::make_shared<LinearSystem>(zero, Matrix::Zero(2, 1));
  Predicate p;
  p.row = RowVector(2);
  p.row << 2.0, -1.0;
  p.offset = 0.5;
  const auto b = window_predicate_min(Interpolant(still, 0.0, 1.0, vec({1, 3}), vec({0})), p);
  EXPECT_DOUBLE_EQ(b.value, -0.5);

  const auto c = window_predicate_min(Interpolant(di, 0.0, 2.0, vec({0, 1}), vec({-1})), x1);
  EXPECT_NEAR(c.value, 0.0, 1e-12);
  EXPECT_TRUE(std::abs(c.t) < 1e-9 || std::abs(c.t - 2.0) < 1e-9);
}

TEST(WindowPredicateMin, BracketsDenseMinimumOnRandomWindows) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> d(-1, 1), tau(0.05, 1.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto sys = random_real_system(rng);
    const Vector x0 = Vector::NullaryExpr(2, [&] { return d(rng); });
    const Vector u = Vector::NullaryExpr(1, [&] { return d(rng); });
    Predicate p;
    p.row = RowVector::NullaryExpr(2, [&] { return d(rng); });
    p.offset = d(rng);
    const double t = tau(rng);
    const WindowMin m = window_predicate_min(Interpolant(sys, 0.0, t, x0, u), p);
    const auto vals = stepped_values(*sys, x0, u, p, t, 10000);
    double dense = vals[0];
    double scale = 0.0;
    for (double v : vals) {
      dense = std::min(dense, v);
      scale = std::max(scale, std::abs(v));
    }
    ASSERT_LE(m.value, dense + 1e-9 * (1 + scale)) << "trial " << trial;
    ASSERT_GE(m.value, dense - 1e-8 * (1 + scale)) << "trial " << trial;
    ASSERT_GE(m.t, 0.0);
    ASSERT_LE(m.t, t);
  }
}

TEST(WindowPredicateMin, SubInterval) {
  const auto di = double_integrator();
  const Interpolant ip(di, 1.0, 3.0, vec({1, -1}), vec({0}));
  const auto m = window_predicate_min(ip, state_pred(2, 0, 1.0, 0.0), 1.5, 2.0);
  EXPECT_NEAR(m.value, 0.0, 1e-12);
  EXPECT_NEAR(m.t, 2.0, 1e-9);
}

TEST(WindowPredicateMin, SerialAndParallelAgree) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> d(-3, 3);
  std::vector<Vector> us;
  for (int k = 0; k < 40; ++k) us.push_back(vec({d(rng)}));
  const auto traj = rollout(double_integrator(), vec({0.5, 0.0}), us, 0.05);
  const Predicate p = state_pred(2, 0, 1.0, 0.2);
  const auto a = predicate_window_minima_serial(traj, p);
  const auto b = predicate_window_minima(traj, p);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].value, b[k].value);
    EXPECT_EQ(a[k].t, b[k].t);
  }
}

TEST(Trajectory, NodesAndShooting) {
  const auto traj = rollout(double_integrator(), vec({1, 0}), {vec({1}), vec({-2}), vec({0.5})}, 0.3);
  EXPECT_LE(traj.shooting_defect(), 1e-12);
  for (int k = 0; k < traj.grid.size(); ++k) {
    EXPECT_EQ(traj.at(traj.grid.time(k)), traj.states[k]);
  }
  const Vector mid = traj.at(0.15);
  EXPECT_NEAR(mid(0), 1.0 + 0.5 * 0.15 * 0.15, 1e-12);
}

TEST(CheckContinuous, ZeroTraceAgainstAlways) {
  const auto traj = rollout(double_integrator(), vec({0, 0}), {vec({0}), vec({0})}, 0.5);
  const Verdict v = check_continuous(traj, parse("G[0,1](x1 >= 1)", 2));
  EXPECT_FALSE(v.satisfied);
  EXPECT_NEAR(v.worst_margin, -1.0, 1e-12);
}

TEST(CheckContinuous, TruthIsCapped) {
  const auto traj = rollout(double_integrator(), vec({0, 0}), {vec({0})}, 1.0);
  const Verdict v = check_continuous(traj, Formula::truth());
  EXPECT_TRUE(v.satisfied);
  EXPECT_EQ(v.worst_margin, kMarginCap);
}

TEST(CheckContinuous, HorizonPastTheEnd) {
  const auto traj = rollout(double_integrator(), vec({0, 0}), {vec({0})}, 1.0);
  EXPECT_THROW(check_continuous(traj, parse("F[0,2](x1 >= 0)", 2)), InsufficientTrace);
}

TEST(CheckContinuous, DipBetweenNodes) {
  // x1(t) = 0.1 - t + t^2 on [0, 1]: both nodes positive, minimum -0.15 at 0.5.
  const auto traj = rollout(double_integrator(), vec({0.1, -1}), {vec({2})}, 1.0);
  const auto r = compare_discrete_continuous(traj, parse("G[0,1](x1 >= 0)", 2));
  EXPECT_EQ(r.gap, GapClass::DiscreteOnlySatisfied);
  EXPECT_NEAR(r.continuous.worst_margin, -0.15, 1e-12);
  EXPECT_NEAR(r.continuous.witness_time, 0.5, 1e-9);
  EXPECT_NEAR(r.discrete_robustness, 0.1, 1e-12);
}

TEST(CheckContinuous, GapClasses) {
  const auto traj = rollout(double_integrator(), vec({0.1, -1}), {vec({2})}, 1.0);
  EXPECT_EQ(compare_discrete_continuous(traj, parse("G[0,1](x1 >= -1)", 2)).gap,
            GapClass::Consistent);
  EXPECT_EQ(compare_discrete_continuous(traj, parse("G[0,1](x1 >= 0.5)", 2)).gap,
            GapClass::BothViolated);
  // Only the dip reaches below -0.1.
  const auto r = compare_discrete_continuous(traj, parse("F[0,1](x1 <= -0.1)", 2));
  EXPECT_EQ(r.gap, GapClass::ContinuousOnlySatisfied);
  EXPECT_NEAR(r.continuous.worst_margin, 0.05, 1e-9);
}

TEST(CheckContinuous, DisjunctionSwitchesBetweenNodes) {
  // x1 falls below zero before x3 rises above it.
  const auto traj = rollout(planar_double_integrator(), vec({0.1, -1, -0.1, 0}),
                            {vec({0, 2}), vec({0, 0})}, 0.5);
  const Formula f = parse("G[0,1](x1 >= 0 | x3 >= 0)", 4);
  const auto r = compare_discrete_continuous(traj, f);
  EXPECT_FALSE(r.continuous.satisfied);
  const double t = r.continuous.witness_time;
  const Vector x = traj.at(t);
  EXPECT_NEAR(std::max(x(0), x(2)), r.continuous.worst_margin, 1e-9);
}

TEST(CheckContinuous, NestedOperatorsAndUntil) {
  const auto traj = rollout(double_integrator(), vec({0, 1}), {vec({0}), vec({0})}, 1.0);
  // x1(t) = t.
  EXPECT_NEAR(continuous_robustness(traj, parse("F[0,1] G[0,1](x1 >= 0.5)", 2), 0.0), 0.5,
              1e-9);
  EXPECT_NEAR(continuous_robustness(traj, parse("(x1 >= -1) U[0,2] (x1 >= 1.5)", 2), 0.0),
              0.5, 1e-9);
  EXPECT_NEAR(continuous_robustness(traj, parse("!(G[0,2](x1 >= 0.5))", 2), 0.0), 0.5, 1e-12);
}

TEST(CheckContinuous, AlwaysFragmentBoundsDiscrete) {
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> d(-2, 2);
  std::uniform_int_distribution<int> pick(0, 3);
  const double step = 0.25;
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<Vector> us;
    for (int k = 0; k < 8; ++k) us.push_back(vec({d(rng)}));
    const auto traj = rollout(double_integrator(), vec({d(rng), d(rng)}), us, step);
    // Random G / & / | nesting over x1 and x2 predicates.
    std::function<Formula(int, double)> gen = [&](int depth, double budget) -> Formula {
      const int kind = depth == 0 ? 0 : pick(rng);
      if (kind == 0) {
        Predicate p = state_pred(2, pick(rng) % 2, d(rng) > 0 ? 1.0 : -1.0, d(rng));
        return Formula::predicate(p);
      }
      if (kind == 3 && budget >= step) {
        const int steps = static_cast<int>(budget / step);
        const int a = pick(rng) % (steps + 1);
        const int b = a + pick(rng) % (steps - a + 1);
        return Formula::always(a * step, b * step, gen(depth - 1, budget - b * step));
      }
      std::vector<Formula> kids{gen(depth - 1, budget), gen(depth - 1, budget)};
      return kind == 1 ? Formula::conjunction(kids) : Formula::disjunction(kids);
    };
    const Formula f = gen(3, 2.0);
    const double cont = continuous_robustness(traj, f, 0.0);
    const double disc = discrete_robustness(traj.node_samples(), f);
    EXPECT_LE(cont, disc + 1e-9) << to_string(f);
  }
}

TEST(CbfAudit, HandBuiltTerm) {
  // x1(t) = -t e^{-2t} from x0 = (0, -1): one term with c = -1, lambda = -2, j = 1.
  Matrix a(2, 2);
  a << -2, 1, 0, -2;
  auto sys = std::make_shared<LinearSystem>(a, Matrix::Zero(2, 1));
  Problem pr;
  pr.system = sys;
  pr.x0 = vec({0, -1});
  pr.formula = with_cbf(parse("G[0,1](x1 >= -1)", 2), CbfSettings{});
  pr.grid = TimeGrid::uniform(1.0, 1);
  Encoding enc = build_miqp(pr);
  const Solution s = branch_and_bound(enc.model);
  ASSERT_EQ(s.status, SolveStatus::Optimal);
  const Trajectory traj = Trajectory::from_solution(enc, s.values);
  const AuditReport rep = cbf_bound_audit(traj, enc, s.values);
  ASSERT_EQ(rep.windows.size(), 1u);
  EXPECT_NEAR(rep.windows[0].encoded_min, 1.0 - 0.5 * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(rep.windows[0].true_min, 1.0 - 0.5 * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(rep.windows[0].true_min_time, 0.5, 1e-9);
}

TEST(CbfAudit, ZeroInputSafeTrajectory) {
  Problem pr;
  pr.system = double_integrator();
  pr.x0 = vec({1, 0});
  pr.formula = with_cbf(parse("G[0,1](x1 >= 0)", 2), CbfSettings{});
  pr.grid = TimeGrid::uniform(1.0, 4);
  Encoding enc = build_miqp(pr);
  const Solution s = branch_and_bound(enc.model);
  ASSERT_EQ(s.status, SolveStatus::Optimal);
  const Trajectory traj = Trajectory::from_solution(enc, s.values);
  EXPECT_NEAR(traj.controls[0](0), 0.0, 1e-3);
  EXPECT_EQ(cbf_bound_audit(traj, enc, s.values).violations, 0);
}

TEST(CbfAudit, ReportsAnUnsoundWindow) {
  Problem pr;
  pr.system = double_integrator();
  pr.x0 = vec({1, 0});
  pr.formula = with_cbf(parse("G[0,1](x1 >= 0)", 2), CbfSettings{});
  pr.grid = TimeGrid::uniform(1.0, 2);
  Encoding enc = build_miqp(pr);
  const Solution s = branch_and_bound(enc.model);
  ASSERT_EQ(s.status, SolveStatus::Optimal);
  Trajectory traj = Trajectory::from_solution(enc, s.values);
  traj.controls[1](0) = -50.0;  // no longer the planned input
  EXPECT_THROW(cbf_bound_audit(traj, enc, s.values), BoundViolation);
  EXPECT_GT(cbf_bound_report(traj, enc, s.values).violations, 0);
}

TEST(CbfAudit, SerialAndParallelAgree) {
  Problem pr;
  pr.system = double_integrator();
  pr.x0 = vec({1, 0});
  pr.formula = with_cbf(parse("G[0,2](x1 >= 0) & F[1,2](x1 <= 0.5)", 2), CbfSettings{});
  pr.grid = TimeGrid::uniform(2.0, 8);
  Encoding enc = build_miqp(pr);
  const Solution s = branch_and_bound(enc.model);
  ASSERT_EQ(s.status, SolveStatus::Optimal);
  const Trajectory traj = Trajectory::from_solution(enc, s.values);
  const AuditReport a = cbf_bound_report(traj, enc, s.values);
  const AuditReport b = cbf_bound_report_serial(traj, enc, s.values);
  ASSERT_EQ(a.windows.size(), b.windows.size());
  EXPECT_EQ(a.violations, b.violations);
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    EXPECT_EQ(a.windows[i].tag, b.windows[i].tag);
    EXPECT_EQ(a.windows[i].encoded_min, b.windows[i].encoded_min);
    EXPECT_EQ(a.windows[i].true_min, b.windows[i].true_min);
  }
}
