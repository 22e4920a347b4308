#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctstl/cli.hpp"
#include "ctstl/errors.hpp"

namespace ctstl {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key) {
  if (!j.contains(key)) throw InvalidScenario(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw InvalidScenario(what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw InvalidScenario(what + " must be finite");
  return v;
}

Vector vector_of(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidScenario(what + " must be an array");
  Vector v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<int>(i)) = number(j[i], what + "[" + std::to_string(i) + "]");
  }
  return v;
}

Matrix matrix_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw InvalidScenario(what + " must be a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<int>(j.size()), static_cast<int>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw InvalidScenario(what + " rows must all have " + std::to_string(cols) + " entries");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<int>(r), static_cast<int>(c)) = number(j[r][c], what);
    }
  }
  return m;
}

std::vector<double> poles_of(const json& j) {
  std::vector<double> out;
  if (!j.is_array()) throw InvalidScenario("poles must be an array");
  for (const auto& p : j) out.push_back(number(p, "pole"));
  return out;
}

CbfSettings settings_of(const json& j) {
  CbfSettings s;
  if (j.is_string()) {
    s.mode = parse_cbf_mode(j.get<std::string>());
    return s;
  }
  s.mode = parse_cbf_mode(require(j, "mode").get<std::string>());
  if (j.contains("poles")) s.poles = poles_of(j.at("poles"));
  return s;
}

}  // namespace

CbfMode parse_cbf_mode(const std::string& text) {
  if (text == "direct") return CbfMode::Direct;
  if (text == "zcbf") return CbfMode::Zcbf;
  if (text == "ecbf") return CbfMode::Ecbf;
  throw InvalidScenario("unknown certificate mode '" + text + "'");
}

Formula Scenario::planned_formula() const {
  const int n = system->states();
  Formula f = parse(formula, n);
  if (cbf) f = with_cbf(f, *cbf);
  if (safety.empty()) return f;
  std::vector<Formula> parts{f};
  for (const auto& s : safety) {
    Formula g = Formula::always(s.from, s.to, parse(s.predicate, n));
    g.cbf = s.settings;
    parts.push_back(g);
  }
  return Formula::conjunction(parts);
}

Problem Scenario::problem() const {
  Problem p;
  p.system = system;
  p.x0 = x0;
  p.formula = planned_formula();
  p.grid = TimeGrid::uniform(t_final, intervals);
  p.config = config;
  return p;
}

Scenario parse_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InvalidScenario(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidScenario("top level must be an object");

  Scenario s;
  try {
    s.name = j.value("name", std::string("scenario"));
    const json& sys = require(j, "system");
    Matrix a = matrix_of(require(sys, "A"), "A");
    Matrix b = matrix_of(require(sys, "B"), "B");
    if (sys.contains("C")) s.c = matrix_of(sys.at("C"), "C");
    s.system = std::make_shared<LinearSystem>(a, b, s.c);
    s.x0 = vector_of(require(j, "x0"), "x0");
    if (s.x0.size() != s.system->states()) {
      throw InvalidScenario("x0 has " + std::to_string(s.x0.size()) + " entries, the system has " +
                            std::to_string(s.system->states()) + " states");
    }
    s.formula = require(j, "formula").get<std::string>();
    s.t_final = number(require(j, "t_f"), "t_f");
    const json& n = require(j, "N");
    if (!n.is_number_integer() || n.get<int>() < 1) throw InvalidScenario("N must be an integer >= 1");
    s.intervals = n.get<int>();
    if (!(s.t_final > 0.0)) throw InvalidScenario("t_f must be positive");

    if (j.contains("cbf") && !j.at("cbf").is_null()) s.cbf = settings_of(j.at("cbf"));
    if (j.contains("safety")) {
      for (const auto& e : j.at("safety")) {
        SafetyPredicate sp;
        sp.predicate = require(e, "predicate").get<std::string>();
        const json& iv = require(e, "interval");
        if (!iv.is_array() || iv.size() != 2) throw InvalidScenario("interval must be [from, to]");
        sp.from = number(iv[0], "interval");
        sp.to = number(iv[1], "interval");
        if (e.contains("mode")) sp.settings = settings_of(e);
        s.safety.push_back(sp);
      }
    }
    if (j.contains("monitor")) {
      for (const auto& m : j.at("monitor")) s.monitor.push_back(m.get<std::string>());
    }

    if (j.contains("config")) {
      const json& c = j.at("config");
      if (c.contains("big_m")) s.config.big_m = number(c.at("big_m"), "big_m");
      if (c.contains("eps_strict")) s.config.eps_strict = number(c.at("eps_strict"), "eps_strict");
      if (c.contains("u_lower")) s.config.u_lower = vector_of(c.at("u_lower"), "u_lower");
      if (c.contains("u_upper")) s.config.u_upper = vector_of(c.at("u_upper"), "u_upper");
      if (c.contains("ecbf_poles")) s.config.ecbf_poles = poles_of(c.at("ecbf_poles"));
      if (c.contains("hull_cuts")) s.config.hull_cuts = c.at("hull_cuts").get<bool>();
    }
    if (j.contains("solver")) {
      const json& c = j.at("solver");
      if (c.contains("max_nodes")) s.solver.max_nodes = c.at("max_nodes").get<long>();
      if (c.contains("time_limit")) s.solver.time_limit = number(c.at("time_limit"), "time_limit");
    }
  } catch (const json::exception& e) {
    throw InvalidScenario(std::string("bad field type: ") + e.what());
  }
  s.config.validate(s.system->inputs());
  // Surfaces formula errors at load time.
  s.planned_formula();
  for (const auto& m : s.monitor) parse(m, s.system->states());
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidScenario("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ctstl
