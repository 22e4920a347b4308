#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ctstl/encoder.hpp"
#include "ctstl/lin_dynamics.hpp"
#include "ctstl/stl.hpp"

namespace ctstl {

/// Node states plus the held control of every interval.
struct Trajectory {
  std::shared_ptr<const LinearSystem> system;
  TimeGrid grid = TimeGrid::uniform(1.0, 1);
  std::vector<Vector> states;    // one per node
  std::vector<Vector> controls;  // one per interval

  /// Reads x and u columns of a solved encoding.
  static Trajectory from_solution(const Encoding& enc, const std::vector<double>& values);

  Interpolant interpolant(int k) const;
  /// State at any t in [0, t_f]; node times return the stored node state.
  Vector at(double t) const;
  /// Largest |x_{k+1} - Phi(tau_k) (x_k, u_k)| over the intervals.
  double shooting_defect() const;
  std::vector<Sample> node_samples() const;
};

struct WindowMin {
  double value;
  double t;  // absolute time of the minimum
};

/// Exact minimum of row x(t) + offset over the interpolant's window (or the
/// part of it inside [from, to]). Real spectra go through the modal
/// expansion; anything else falls back to 10^4-point sampling with local
/// refinement.
WindowMin window_predicate_min(const Interpolant& ip, const Predicate& pred);
WindowMin window_predicate_min(const Interpolant& ip, const Predicate& pred, double from,
                               double to);

/// Minimum of a modal expansion evaluated at (x0, u0) over [0, tau]; t is
/// relative to the window start.
WindowMin decomposition_window_min(const ModeDecomposition& d, const Vector& x0,
                                   const Vector& u0, double tau);

/// Per-window minima of one predicate along the whole trajectory.
std::vector<WindowMin> predicate_window_minima(const Trajectory& traj, const Predicate& pred);
std::vector<WindowMin> predicate_window_minima_serial(const Trajectory& traj,
                                                      const Predicate& pred);

struct MonitorOptions {
  double dense_step = 1e-3;
};

struct NodeReport {
  double t;
  double discrete_margin;  // discrete robustness evaluated from this node
};

struct Verdict {
  bool satisfied = false;
  double worst_margin = 0.0;
  double witness_time = 0.0;
  std::vector<NodeReport> nodes;
};

constexpr double kViolationTol = 1e-6;
constexpr double kMarginCap = 1e18;

/// Continuous-time quantitative semantics at t = 0. Always over a predicate
/// is exact; other temporal arguments use a dense scan with local
/// refinement. Throws InsufficientTrace when the horizon exceeds t_f.
Verdict check_continuous(const Trajectory& traj, const Formula& f,
                         const MonitorOptions& options = {});

/// Continuous robustness of `f` evaluated at time t.
double continuous_robustness(const Trajectory& traj, const Formula& f, double t,
                             const MonitorOptions& options = {});

enum class GapClass {
  Consistent,               // both satisfied
  DiscreteOnlySatisfied,    // grid samples satisfy, continuous violates
  BothViolated,
  ContinuousOnlySatisfied,  // e.g. an F witness strictly between nodes
};

const char* to_string(GapClass c);

struct GapReport {
  double discrete_robustness;
  Verdict continuous;
  GapClass gap;
};

GapReport compare_discrete_continuous(const Trajectory& traj, const Formula& f,
                                      const MonitorOptions& options = {});

struct WindowAudit {
  std::string tag;
  int window;
  bool active;
  double encoded_min;
  double true_min;
  double true_min_time;  // relative to the window start
  bool ok;
};

struct AuditReport {
  std::vector<WindowAudit> windows;
  int violations = 0;
};

/// White-box check of every encoded window bound against the true window
/// minimum of zeta. Throws BoundViolation naming the failing windows.
AuditReport cbf_bound_audit(const Trajectory& traj, const Encoding& enc,
                            const std::vector<double>& values);

/// Same checks without throwing.
AuditReport cbf_bound_report(const Trajectory& traj, const Encoding& enc,
                             const std::vector<double>& values);
AuditReport cbf_bound_report_serial(const Trajectory& traj, const Encoding& enc,
                                    const std::vector<double>& values);

}  // namespace ctstl
