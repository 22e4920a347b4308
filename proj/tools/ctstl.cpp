#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ctstl/cli.hpp"
#include "ctstl/errors.hpp"

using namespace ctstl;

namespace {

struct Flags {
  double big_m = 0.0;
  std::vector<double> poles;
  std::string out_dir = ".";
  double dense_step = 1e-3;
};

void apply(Scenario& s, const Flags& f) {
  if (f.big_m > 0.0) s.config.big_m = f.big_m;
  if (!f.poles.empty()) {
    for (double p : f.poles) {
      if (!(p < 0.0)) throw InvalidConfig("ECBF poles must be negative");
    }
    s.config.ecbf_poles = f.poles;
    if (s.cbf) s.cbf->poles = f.poles;
    for (auto& sp : s.safety) sp.settings.poles = f.poles;
  }
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--big-m", f.big_m, "big-M constant (default from the scenario)");
  cmd->add_option("--poles", f.poles, "ECBF poles, e.g. --poles -20 -21");
  cmd->add_option("--out-dir", f.out_dir, "directory for output files");
  cmd->add_option("--dense-step", f.dense_step, "sampling step of the trajectory CSV")
      ->check(CLI::PositiveNumber);
}

int plan(Scenario s, const Flags& f) {
  apply(s, f);
  RunOptions options;
  options.monitor.dense_step = f.dense_step;
  const RunReport r = run_plan(s, options);
  std::printf("%s: %s", r.scenario.c_str(), to_string(r.solution.status));
  if (r.feasible()) std::printf(", objective %.9g", r.solution.objective);
  std::printf(" (%ld nodes, %.3f s)\n", r.solution.stats.nodes, r.solve_seconds);
  if (r.virtual_nodes > 0) {
    std::printf("  %d virtual nodes, %d control ties\n", r.virtual_nodes, r.control_ties);
  }
  for (const auto& note : r.notes) std::printf("  note: %s\n", note.c_str());
  for (const auto& v : r.verdicts) {
    const Verdict& c = v.report.continuous;
    std::printf("  %s\n    discrete %.6g, continuous %s (worst %.6g at t=%.6g), %s\n",
                v.text.c_str(), v.report.discrete_robustness,
                c.satisfied ? "SATISFIED" : "VIOLATED", c.worst_margin, c.witness_time,
                to_string(v.report.gap));
  }
  if (r.audit) {
    std::printf("  window audit: %zu windows, %d violations\n", r.audit->windows.size(),
                r.audit->violations);
  }
  for (const auto& p : write_outputs(r, f.out_dir, f.dense_step)) {
    std::printf("  wrote %s\n", p.c_str());
  }
  return r.feasible() && r.satisfied() ? 0 : 1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedTrace("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-time STL planner with window CBF certificates"};
  app.require_subcommand(1);

  Flags flags;
  std::string scenario_path;
  auto* plan_cmd = app.add_subcommand("plan", "solve a scenario and check the result");
  plan_cmd->add_option("scenario", scenario_path, "scenario JSON file")->required();
  add_common(plan_cmd, flags);

  std::string trace_path;
  std::string formula;
  std::string system_path;
  auto* check_cmd = app.add_subcommand("check", "monitor a trajectory CSV");
  check_cmd->add_option("trajectory", trace_path, "CSV with t,x1..xn[,u1..um]")->required();
  check_cmd->add_option("formula", formula, "STL formula text")->required();
  check_cmd->add_option("--system", system_path, "scenario whose system and grid to use");
  check_cmd->add_option("--dense-step", flags.dense_step, "scan step for F/U arguments")
      ->check(CLI::PositiveNumber);

  auto* export_cmd = app.add_subcommand("export", "write the scenario's MIQP as an LP file");
  export_cmd->add_option("scenario", scenario_path, "scenario JSON file")->required();
  add_common(export_cmd, flags);

  std::string example;
  bool print_only = false;
  auto* examples_cmd = app.add_subcommand("examples", "run a bundled scenario");
  examples_cmd->add_option("name", example, "list, or one of the bundled names")->required();
  examples_cmd->add_flag("--print", print_only, "print the scenario JSON instead of solving");
  add_common(examples_cmd, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan_cmd) return plan(load_scenario(scenario_path), flags);

    if (*examples_cmd) {
      if (example == "list") {
        for (const auto& n : bundled_names()) std::printf("%s\n", n.c_str());
        return 0;
      }
      const std::string& text = bundled_text(example);
      if (print_only) {
        std::fputs(text.c_str(), stdout);
        return 0;
      }
      return plan(parse_scenario(text), flags);
    }

    if (*export_cmd) {
      Scenario s = load_scenario(scenario_path);
      apply(s, flags);
      std::filesystem::create_directories(flags.out_dir);
      const std::string path = (std::filesystem::path(flags.out_dir) / (s.name + ".lp")).string();
      std::ofstream(path) << run_export(s);
      std::printf("wrote %s\n", path.c_str());
      return 0;
    }

    if (*check_cmd) {
      std::optional<Scenario> s;
      if (!system_path.empty()) s = load_scenario(system_path);
      MonitorOptions options;
      options.dense_step = flags.dense_step;
      const CheckResult r = run_check(read_trajectory_csv(slurp(trace_path)), formula,
                                      s ? &*s : nullptr, options);
      if (!r.warning.empty()) std::fprintf(stderr, "warning: %s\n", r.warning.c_str());
      std::printf("discrete robustness %.9g\n", r.discrete_robustness);
      if (r.verdict) {
        std::printf("continuous %s, worst margin %.9g at t=%.9g\n",
                    r.verdict->satisfied ? "SATISFIED" : "VIOLATED", r.verdict->worst_margin,
                    r.verdict->witness_time);
      }
      return r.satisfied() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.stage().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
