#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctstl/cli.hpp"
#include "ctstl/errors.hpp"

namespace ctstl {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json verdict_to_json(const Verdict& v) {
  json nodes = json::array();
  for (const auto& n : v.nodes) nodes.push_back({{"t", n.t}, {"discrete_margin", n.discrete_margin}});
  return {{"satisfied", v.satisfied},
          {"worst_margin", v.worst_margin},
          {"witness_time", v.witness_time},
          {"nodes", nodes}};
}

bool retry_big_m(const Encoding& enc, const Solution& s) {
  if (s.status == SolveStatus::Infeasible) return enc.capped_big_m > 0;
  if (s.values.empty()) return false;
  return !binding_big_m_rows(enc.model, s.values).empty();
}

double parse_field(const std::string& cell, int line) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\r')) ++end;
  if (end == begin || *end != '\0' || !std::isfinite(v)) {
    throw MalformedTrace("line " + std::to_string(line) + ": '" + cell + "' is not a number");
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  return out;
}

}  // namespace

bool RunReport::satisfied() const {
  if (!feasible() || verdicts.empty()) return false;
  return std::all_of(verdicts.begin(), verdicts.end(),
                     [](const FormulaReport& r) { return r.report.continuous.satisfied; });
}

RunReport run_plan(const Scenario& scenario, const RunOptions& options) {
  RunReport r;
  r.scenario = scenario.name;
  Problem problem = scenario.problem();
  Encoding enc;
  for (int attempt = 0;; ++attempt) {
    auto t0 = std::chrono::steady_clock::now();
    enc = build_miqp(problem);
    r.encode_seconds += seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    r.solution = branch_and_bound(enc.model, scenario.solver);
    r.solve_seconds += seconds_since(t0);
    if (attempt < options.max_big_m_retries && retry_big_m(enc, r.solution)) {
      r.notes.push_back("big-M " + fmt12(problem.config.big_m) + " too small for " +
                        std::to_string(enc.capped_big_m) + " rows; retrying with ten times");
      problem.config.big_m *= 10.0;
      ++r.big_m_retries;
      continue;
    }
    break;
  }
  r.big_m_used = problem.config.big_m;
  r.variables = enc.model.num_variables();
  r.constraints = enc.model.num_constraints();
  r.binaries = static_cast<int>(enc.model.binaries().size());
  r.control_ties = static_cast<int>(enc.ties.size());
  for (int k = 0; k < enc.grid.size(); ++k) r.virtual_nodes += enc.grid.is_virtual(k) ? 1 : 0;
  r.notes.insert(r.notes.end(), enc.notes.begin(), enc.notes.end());
  if (r.solution.values.empty()) return r;

  const auto t0 = std::chrono::steady_clock::now();
  r.trajectory = Trajectory::from_solution(enc, r.solution.values);
  const Formula planned = scenario.planned_formula();
  r.verdicts.push_back({to_string(planned),
                        compare_discrete_continuous(*r.trajectory, planned, options.monitor)});
  for (const auto& text : scenario.monitor) {
    const Formula f = parse(text, scenario.system->states());
    r.verdicts.push_back({text, compare_discrete_continuous(*r.trajectory, f, options.monitor)});
  }
  if (!enc.windows.empty()) r.audit = cbf_bound_report(*r.trajectory, enc, r.solution.values);
  r.monitor_seconds = seconds_since(t0);
  return r;
}

std::vector<DenseSample> dense_samples(const Trajectory& traj, double step) {
  if (!(step > 0.0)) throw InvalidConfig("dense step must be positive");
  const double tf = traj.grid.t_final();
  const auto& nodes = traj.grid.nodes();
  std::vector<double> times(nodes.begin(), nodes.end());
  const long count = static_cast<long>(std::floor(tf / step + 1e-9));
  for (long i = 0; i <= count; ++i) {
    const double t = std::min(tf, static_cast<double>(i) * step);
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
    const bool near_node = (it != nodes.end() && *it - t < 1e-9) ||
                           (it != nodes.begin() && t - *(it - 1) < 1e-9);
    if (!near_node) times.push_back(t);
  }
  std::sort(times.begin(), times.end());

  std::vector<DenseSample> out;
  out.reserve(times.size());
  for (double t : times) {
    const int k = traj.grid.interval_containing(t);
    out.push_back({t, traj.at(t), traj.controls[k]});
  }
  return out;
}

std::string trajectory_csv(const Trajectory& traj, double step) {
  std::string out = "t";
  const int n = traj.system->states();
  const int m = traj.system->inputs();
  for (int i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
  for (int i = 1; i <= m; ++i) out += ",u" + std::to_string(i);
  out += '\n';
  for (const auto& s : dense_samples(traj, step)) {
    out += fmt12(s.t);
    for (int i = 0; i < n; ++i) out += "," + fmt12(s.x(i));
    for (int i = 0; i < m; ++i) out += "," + fmt12(s.u(i));
    out += '\n';
  }
  return out;
}

std::string verdict_json(const RunReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["status"] = to_string(r.solution.status);
  j["feasible"] = r.feasible();
  j["satisfied"] = r.satisfied();
  if (r.feasible()) j["objective"] = r.solution.objective;
  if (!r.solution.certificate.empty()) j["infeasibility"] = r.solution.certificate;

  json formulas = json::array();
  for (const auto& v : r.verdicts) {
    formulas.push_back({{"formula", v.text},
                        {"discrete_robustness", v.report.discrete_robustness},
                        {"gap", to_string(v.report.gap)},
                        {"continuous", verdict_to_json(v.report.continuous)}});
  }
  j["formulas"] = formulas;

  if (r.trajectory) {
    const Trajectory& t = *r.trajectory;
    json nodes = json::array();
    for (int k = 0; k < t.grid.size(); ++k) {
      json node = {{"t", t.grid.time(k)}, {"virtual", t.grid.is_virtual(k)}, {"x", vector_json(t.states[k])}};
      if (k < t.grid.intervals()) node["u"] = vector_json(t.controls[k]);
      nodes.push_back(node);
    }
    j["nodes"] = nodes;
  }
  if (r.audit) {
    json failing = json::array();
    for (const auto& w : r.audit->windows) {
      if (w.ok) continue;
      failing.push_back({{"tag", w.tag},
                         {"window", w.window},
                         {"encoded_min", w.encoded_min},
                         {"true_min", w.true_min},
                         {"t", w.true_min_time}});
    }
    j["audit"] = {{"windows", r.audit->windows.size()},
                  {"violations", r.audit->violations},
                  {"failing", failing}};
  }
  j["notes"] = r.notes;
  return j.dump(2) + "\n";
}

std::string stats_json(const RunReport& r) {
  const SolveStats& s = r.solution.stats;
  json j = {{"scenario", r.scenario},
            {"status", to_string(r.solution.status)},
            {"variables", r.variables},
            {"constraints", r.constraints},
            {"binaries", r.binaries},
            {"virtual_nodes", r.virtual_nodes},
            {"control_ties", r.control_ties},
            {"big_m", r.big_m_used},
            {"big_m_retries", r.big_m_retries},
            {"nodes", s.nodes},
            {"incumbents", s.incumbents},
            {"qp_solves", s.qp_solves},
            {"ipm_iterations", s.iterations},
            {"encode_seconds", r.encode_seconds},
            {"solve_seconds", r.solve_seconds},
            {"monitor_seconds", r.monitor_seconds}};
  return j.dump(2) + "\n";
}

std::vector<std::string> write_outputs(const RunReport& report, const std::string& dir,
                                       double dense_step) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> files;
  if (report.trajectory) {
    files.emplace_back(report.scenario + "_trajectory.csv",
                       trajectory_csv(*report.trajectory, dense_step));
  }
  files.emplace_back(report.scenario + "_verdict.json", verdict_json(report));
  files.emplace_back(report.scenario + "_stats.json", stats_json(report));
  std::vector<std::string> paths;
  for (const auto& [name, text] : files) {
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path);
    if (!out) throw InvalidScenario("cannot write " + path);
    out << text;
    paths.push_back(path);
  }
  return paths;
}

CsvTrace read_trajectory_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw MalformedTrace("empty file");
  const auto header = split(line);
  if (header.empty() || header[0] != "t") throw MalformedTrace("first column must be 't'");
  int n = 0;
  int m = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (m == 0 && h == "x" + std::to_string(n + 1)) {
      ++n;
    } else if (h == "u" + std::to_string(m + 1)) {
      ++m;
    } else {
      throw MalformedTrace("unexpected column '" + h + "'");
    }
  }
  if (n == 0) throw MalformedTrace("no state columns");

  CsvTrace trace;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw MalformedTrace("line " + std::to_string(lineno) + " has " +
                           std::to_string(cells.size()) + " columns, expected " +
                           std::to_string(header.size()));
    }
    const double t = parse_field(cells[0], lineno);
    if (!trace.t.empty() && !(t > trace.t.back())) {
      throw MalformedTrace("line " + std::to_string(lineno) + ": times must increase");
    }
    Vector x(n);
    Vector u(m);
    for (int i = 0; i < n; ++i) x(i) = parse_field(cells[1 + i], lineno);
    for (int i = 0; i < m; ++i) u(i) = parse_field(cells[1 + n + i], lineno);
    trace.t.push_back(t);
    trace.x.push_back(x);
    if (m > 0) trace.u.push_back(u);
  }
  if (trace.t.empty()) throw MalformedTrace("no samples");
  return trace;
}

bool CheckResult::satisfied() const {
  return verdict ? verdict->satisfied : discrete_robustness >= -kViolationTol;
}

CheckResult run_check(const CsvTrace& trace, const std::string& formula, const Scenario* scenario,
                      const MonitorOptions& options) {
  const int n = static_cast<int>(trace.x.front().size());
  const Formula f = parse(formula, n);
  CheckResult out;

  if (scenario) {
    if (scenario->system->states() != n) {
      throw MalformedTrace("trace has " + std::to_string(n) + " state columns, the system has " +
                           std::to_string(scenario->system->states()));
    }
    if (!trace.u.empty() && static_cast<int>(trace.u.front().size()) != scenario->system->inputs()) {
      throw MalformedTrace("trace has " + std::to_string(trace.u.front().size()) +
                           " input columns, the system has " +
                           std::to_string(scenario->system->inputs()));
    }
  }
  if (!scenario || trace.u.empty()) {
    out.warning = scenario ? "trace has no control columns; only the samples were evaluated"
                           : "no system given; only the samples were evaluated";
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < trace.t.size(); ++i) samples.push_back({trace.t[i], trace.x[i]});
    out.discrete_robustness = discrete_robustness(samples, f);
    return out;
  }

  // Rebuild the planner's grid up to the end of the trace.
  const Problem p = scenario->problem();
  const TimeGrid full =
      align_time_grid(to_nnf(p.formula, p.config.eps_strict), p.grid).grid;
  std::vector<double> nodes;
  std::vector<bool> flags;
  std::vector<std::size_t> rows;
  for (int k = 0; k < full.size(); ++k) {
    const double t = full.time(k);
    if (t > trace.t.back() + 1e-9) break;
    const auto it = std::lower_bound(trace.t.begin(), trace.t.end(), t - 1e-9);
    if (it == trace.t.end() || std::abs(*it - t) > 1e-9) {
      throw MalformedTrace("no sample at grid node t = " + fmt12(t));
    }
    nodes.push_back(t);
    flags.push_back(full.is_virtual(k));
    rows.push_back(static_cast<std::size_t>(it - trace.t.begin()));
  }
  if (nodes.size() < 2) {
    throw InsufficientTrace("trace ends at " + fmt12(trace.t.back()) +
                            " before the first grid interval closes");
  }
  Trajectory traj;
  traj.system = scenario->system;
  traj.grid = TimeGrid(nodes, flags);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    traj.states.push_back(trace.x[rows[k]]);
    if (k + 1 < rows.size()) traj.controls.push_back(trace.u[rows[k]]);
  }
  double scale = 1.0;
  for (const auto& x : traj.states) scale = std::max(scale, x.cwiseAbs().maxCoeff());
  if (traj.shooting_defect() > 1e-6 * scale) {
    out.warning = "trace does not follow the scenario dynamics (shooting defect " +
                  fmt12(traj.shooting_defect()) + ")";
  }
  out.continuous = true;
  out.discrete_robustness = discrete_robustness(traj.node_samples(), f);
  out.verdict = check_continuous(traj, f, options);
  return out;
}

std::string run_export(const Scenario& scenario) {
  return export_lp(build_miqp(scenario.problem()).model);
}

}  // namespace ctstl
