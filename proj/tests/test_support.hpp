#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "adgan/matrix.hpp"
#include "adgan/params.hpp"

namespace adgan::testing {

// Central finite difference of a scalar functional with respect to one
// parameter entry. The functional must rebuild its computation from the
// parameter set on every call so it stays independent of the tape path
// under test.
inline double central_fd(const std::function<double(const ParameterSet&)>& f, ParameterSet& ps,
                         const std::string& name, int r, int c, double h = 1e-5) {
  double& slot = ps.at(name).at(r, c);
  const double orig = slot;
  slot = orig + h;
  const double fp = f(ps);
  slot = orig - h;
  const double fm = f(ps);
  slot = orig;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-4) {
  const double denom = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / denom;
}

// Max relative error between analytic and finite-difference gradients over
// every entry of every named parameter.
inline double max_grad_fd_err(const std::function<double(const ParameterSet&)>& f,
                              ParameterSet& ps,
                              const std::vector<std::pair<std::string, Matrix>>& analytic,
                              double h = 1e-5) {
  double worst = 0.0;
  for (const auto& [name, g] : analytic) {
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) {
        const double fd = central_fd(f, ps, name, r, c, h);
        worst = std::max(worst, rel_err(g.at(r, c), fd));
      }
  }
  return worst;
}

}  // namespace adgan::testing
