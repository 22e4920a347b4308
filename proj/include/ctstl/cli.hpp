#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctstl/encoder.hpp"
#include "ctstl/miqp.hpp"
#include "ctstl/monitor.hpp"

namespace ctstl {

/// G[from, to](predicate) planned with a window certificate.
struct SafetyPredicate {
  std::string predicate;
  double from = 0.0;
  double to = 0.0;
  CbfSettings settings;
};

/// Everything needed to plan one problem. Read from JSON (see README for the
/// field names); matrices are row-major arrays of rows.
struct Scenario {
  std::string name;
  std::shared_ptr<const LinearSystem> system;
  Matrix c;  // optional output rows; predicates are written over states
  Vector x0;
  std::string formula;
  double t_final = 1.0;
  int intervals = 1;
  std::optional<CbfSettings> cbf;  // attached to every Always node of `formula`
  std::vector<SafetyPredicate> safety;
  std::vector<std::string> monitor;  // extra formulas checked on the result
  EncodingConfig config;
  BnbOptions solver;

  /// formula with its certificates, conjoined with the safety predicates.
  Formula planned_formula() const;
  Problem problem() const;
};

Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);

/// Parses "direct", "zcbf" or "ecbf".
CbfMode parse_cbf_mode(const std::string& text);

/// Names of the scenarios compiled into the binary.
std::vector<std::string> bundled_names();
/// JSON text of a bundled scenario; throws InvalidScenario for unknown names.
const std::string& bundled_text(const std::string& name);
/// 64-bit FNV-1a of `text`.
std::uint64_t fnv1a(const std::string& text);

struct FormulaReport {
  std::string text;
  GapReport report;
};

struct RunReport {
  std::string scenario;
  Solution solution;
  int big_m_retries = 0;
  double big_m_used = 0.0;
  int variables = 0;
  int constraints = 0;
  int binaries = 0;
  int virtual_nodes = 0;
  int control_ties = 0;
  std::vector<std::string> notes;
  std::optional<Trajectory> trajectory;
  std::vector<FormulaReport> verdicts;  // planned formula first
  std::optional<AuditReport> audit;
  double encode_seconds = 0.0;
  double solve_seconds = 0.0;
  double monitor_seconds = 0.0;

  bool feasible() const { return trajectory.has_value(); }
  bool satisfied() const;
};

struct RunOptions {
  MonitorOptions monitor;
  // Retries with ten times the big-M while rows stay capped or binding.
  int max_big_m_retries = 2;
};

/// parse -> nnf -> align -> ground -> encode -> branch and bound ->
/// trajectory -> continuous check of every monitored formula.
RunReport run_plan(const Scenario& scenario, const RunOptions& options = {});

/// Dense samples at every multiple of `step` plus every node time.
/// Node rows carry the node states unchanged.
struct DenseSample {
  double t;
  Vector x;
  Vector u;
};
std::vector<DenseSample> dense_samples(const Trajectory& traj, double step);

/// t,x1..xn,u1..um with 12 significant digits.
std::string trajectory_csv(const Trajectory& traj, double step);
std::string verdict_json(const RunReport& report);
std::string stats_json(const RunReport& report);

/// Writes <name>_trajectory.csv, <name>_verdict.json and <name>_stats.json
/// into `dir`. Returns the paths written.
std::vector<std::string> write_outputs(const RunReport& report, const std::string& dir,
                                       double dense_step);

struct CsvTrace {
  std::vector<double> t;
  std::vector<Vector> x;
  std::vector<Vector> u;  // empty when the file has no control columns
};

/// Reads t,x1..xn[,u1..um]. Throws MalformedTrace.
CsvTrace read_trajectory_csv(const std::string& text);

struct CheckResult {
  bool continuous = false;  // false: only grid samples were evaluated
  std::string warning;
  double discrete_robustness = 0.0;
  std::optional<Verdict> verdict;

  bool satisfied() const;
};

/// Monitors `formula` on a trajectory file. With a scenario the trace is
/// rebuilt on the scenario's (aligned) grid and checked continuously;
/// without one, or without control columns, only the samples are evaluated.
CheckResult run_check(const CsvTrace& trace, const std::string& formula,
                      const Scenario* scenario, const MonitorOptions& options = {});

/// LP text of the scenario's model.
std::string run_export(const Scenario& scenario);

}  // namespace ctstl
