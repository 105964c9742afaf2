// Central-finite-difference gradient checking against the reverse-mode tape.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "sonamix/autograd.hpp"

namespace sonamix::testutil {

using BuildFn = std::function<ag::Var<double>(ag::Graph<double>&,
                                              std::map<std::string, ag::Var<double>>&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
};

// Compares reverse-mode gradients of the scalar built by `build` against
// central differences for every scalar in `params`. Relative error uses
// |a - b| / max(1, |a| + |b|).
inline GradCheckResult gradcheck(std::map<std::string, Mat<double>> params, const BuildFn& build,
                                 double fd_step = 1e-5) {
  // Reverse-mode pass.
  std::map<std::string, Mat<double>> analytic;
  {
    ag::Graph<double> g;
    std::map<std::string, ag::Var<double>> vars;
    for (auto& [name, m] : params) vars[name] = g.param(m);
    auto loss = build(g, vars);
    g.backward(loss);
    for (auto& [name, var] : vars) {
      var->ensure_grad();
      analytic[name] = var->grad;
    }
  }

  auto eval = [&](const std::map<std::string, Mat<double>>& p) {
    ag::Graph<double> g;
    g.grad_enabled = false;
    std::map<std::string, ag::Var<double>> vars;
    for (const auto& [name, m] : p) vars[name] = g.input(m);
    return build(g, vars)->value(0, 0);
  };

  GradCheckResult result;
  for (auto& [name, m] : params) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double orig = m(i, j);
        m(i, j) = orig + fd_step;
        const double f_plus = eval(params);
        m(i, j) = orig - fd_step;
        const double f_minus = eval(params);
        m(i, j) = orig;
        const double fd = (f_plus - f_minus) / (2.0 * fd_step);
        const double an = analytic[name](i, j);
        const double rel = std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an));
        if (rel > result.max_rel_err) {
          result.max_rel_err = rel;
          result.worst_param = name;
        }
      }
    }
  }
  return result;
}

}  // namespace sonamix::testutil
