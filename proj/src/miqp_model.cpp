#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>

#include "ctstl/errors.hpp"
#include "ctstl/miqp.hpp"

namespace ctstl {

namespace {

bool valid_name(const std::string& s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

}  // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "optimal";
    case SolveStatus::Infeasible:
      return "infeasible";
    case SolveStatus::IterLimit:
      return "iteration-limit";
  }
  return "unknown";
}

int MiqpModel::add_variable(std::string name, double lower, double upper) {
  if (!valid_name(name)) throw InvalidModel("invalid variable name '" + name + "'");
  if (std::isnan(lower) || std::isnan(upper) || lower > upper) {
    throw InvalidModel("invalid bounds for " + name);
  }
  const int id = num_variables();
  if (!names_.emplace(name, id).second) throw InvalidModel("duplicate variable " + name);
  vars_.push_back({std::move(name), lower, upper, false});
  lin_.push_back(0.0);
  return id;
}

int MiqpModel::add_binary(std::string name) {
  const int id = add_variable(std::move(name), 0.0, 1.0);
  vars_[id].binary = true;
  return id;
}

int MiqpModel::add_constraint(std::string name, std::vector<std::pair<int, double>> terms,
                              Sense sense, double rhs, int big_m_var) {
  if (!valid_name(name)) throw InvalidModel("invalid constraint name '" + name + "'");
  if (!std::isfinite(rhs)) throw InvalidModel("non-finite rhs in " + name);
  // Merge duplicate columns and drop exact zeros.
  std::sort(terms.begin(), terms.end());
  std::vector<std::pair<int, double>> merged;
  for (const auto& [col, coef] : terms) {
    if (col < 0 || col >= num_variables()) throw InvalidModel("unknown column in " + name);
    if (!std::isfinite(coef)) throw InvalidModel("non-finite coefficient in " + name);
    if (!merged.empty() && merged.back().first == col) {
      merged.back().second += coef;
    } else {
      merged.emplace_back(col, coef);
    }
  }
  std::erase_if(merged, [](const auto& t) { return t.second == 0.0; });
  rows_.push_back({std::move(name), std::move(merged), sense, rhs, big_m_var});
  return num_constraints() - 1;
}

void MiqpModel::add_quadratic(int i, int j, double coef) {
  if (i > j) std::swap(i, j);
  if (i < 0 || j >= num_variables()) throw InvalidModel("unknown column in objective");
  if (!std::isfinite(coef)) throw InvalidModel("non-finite objective coefficient");
  for (auto& q : quad_) {
    if (q.i == i && q.j == j) {
      q.coef += coef;
      return;
    }
  }
  quad_.push_back({i, j, coef});
}

void MiqpModel::add_linear_objective(int i, double coef) {
  if (i < 0 || i >= num_variables()) throw InvalidModel("unknown column in objective");
  lin_[i] += coef;
}

void MiqpModel::set_bounds(int var, double lower, double upper) {
  if (var < 0 || var >= num_variables() || lower > upper) {
    throw InvalidModel("invalid bound update");
  }
  vars_[var].lower = lower;
  vars_[var].upper = upper;
}

void MiqpModel::set_sign_indicator(int binary, std::vector<std::pair<int, double>> expr,
                                   double constant) {
  if (binary < 0 || binary >= num_variables() || !vars_[binary].binary) {
    throw InvalidModel("sign indicator must be a binary column");
  }
  for (const auto& [col, coef] : expr) {
    if (col < 0 || col >= num_variables() || !std::isfinite(coef)) {
      throw InvalidModel("sign indicator references an invalid column");
    }
  }
  signs_[binary] = {std::move(expr), constant};
}

std::vector<int> MiqpModel::binaries() const {
  std::vector<int> out;
  for (int i = 0; i < num_variables(); ++i) {
    if (vars_[i].binary) out.push_back(i);
  }
  return out;
}

int MiqpModel::find_variable(const std::string& name) const {
  auto it = names_.find(name);
  return it == names_.end() ? -1 : it->second;
}

double MiqpModel::objective_value(const std::vector<double>& x) const {
  double v = 0.0;
  for (const auto& q : quad_) v += q.coef * x[q.i] * x[q.j];
  for (int i = 0; i < num_variables(); ++i) v += lin_[i] * x[i];
  return v;
}

double MiqpModel::max_violation(const std::vector<double>& x) const {
  double worst = 0.0;
  for (int i = 0; i < num_variables(); ++i) {
    worst = std::max(worst, vars_[i].lower - x[i]);
    worst = std::max(worst, x[i] - vars_[i].upper);
  }
  for (const auto& r : rows_) {
    double lhs = 0.0;
    for (const auto& [col, coef] : r.terms) lhs += coef * x[col];
    switch (r.sense) {
      case Sense::Le:
        worst = std::max(worst, lhs - r.rhs);
        break;
      case Sense::Ge:
        worst = std::max(worst, r.rhs - lhs);
        break;
      case Sense::Eq:
        worst = std::max(worst, std::abs(lhs - r.rhs));
        break;
    }
  }
  return worst;
}

void MiqpModel::validate() const {
  std::vector<int> cols;
  for (const auto& q : quad_) {
    cols.push_back(q.i);
    cols.push_back(q.j);
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  if (cols.empty()) return;
  const int k = static_cast<int>(cols.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(k, k);
  auto local = [&](int c) {
    return static_cast<int>(std::lower_bound(cols.begin(), cols.end(), c) - cols.begin());
  };
  for (const auto& q : quad_) {
    const int a = local(q.i);
    const int b = local(q.j);
    if (a == b) {
      h(a, a) += 2.0 * q.coef;
    } else {
      h(a, b) += q.coef;
      h(b, a) += q.coef;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw InvalidModel("objective quadratic form is not positive semidefinite");
  }
}

std::vector<int> binding_big_m_rows(const MiqpModel& model, const std::vector<double>& x,
                                    double fraction) {
  std::vector<int> out;
  const auto& rows = model.constraints();
  for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
    const auto& row = rows[r];
    if (row.big_m_var < 0 || row.sense == Sense::Eq) continue;
    double m_coef = 0.0;
    double rest = 0.0;
    for (const auto& [col, coef] : row.terms) {
      if (col == row.big_m_var) {
        m_coef = coef;
      } else {
        rest += coef * x[col];
      }
    }
    if (m_coef == 0.0) continue;
    const double zval = std::round(x[row.big_m_var]);
    // Normalize to "rest <= bound(z)".
    const double sign = row.sense == Sense::Le ? 1.0 : -1.0;
    const double rest_n = sign * rest;
    const double m_n = sign * m_coef;
    const double bound_now = sign * row.rhs - m_n * zval;
    const double bound_other = sign * row.rhs - m_n * (1.0 - zval);
    if (bound_now <= bound_other) continue;  // tight side, nothing relaxed
    const double big_m = std::abs(m_coef);
    if (rest_n - bound_other >= fraction * big_m) out.push_back(r);
  }
  return out;
}

}  // namespace ctstl
