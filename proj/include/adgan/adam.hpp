#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "adgan/common.hpp"
#include "adgan/matrix.hpp"
#include "adgan/params.hpp"

namespace adgan {

// Adam with bias correction over a named subset of a ParameterSet.
// Moment tensors are allocated lazily on first update, shape-matched to
// their parameters.
class AdamState {
 public:
  AdamState(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw ValidationError("adam: lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ValidationError("adam: betas must lie in [0, 1)");
  }

  double lr() const { return lr_; }
  long step_count() const { return step_; }

  // One update over the given (name, gradient) pairs. Every named parameter
  // must exist in `params` and shape-match its gradient.
  void step(ParameterSet& params, const std::vector<std::pair<std::string, Matrix>>& grads) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (const auto& [name, g] : grads) {
      Matrix& p = params.at(name);
      if (!p.same_shape(g))
        throw ValidationError("adam: gradient shape mismatch for " + name);
      g.ensure_finite("adam gradient");
      auto& slot = moments_[name];
      if (slot.m.empty()) {
        slot.m = Matrix(p.rows(), p.cols());
        slot.v = Matrix(p.rows(), p.cols());
      }
      double* pm = slot.m.data();
      double* pv = slot.v.data();
      double* pp = p.data();
      const double* pg = g.data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        pm[i] = beta1_ * pm[i] + (1.0 - beta1_) * pg[i];
        pv[i] = beta2_ * pv[i] + (1.0 - beta2_) * pg[i] * pg[i];
        const double mhat = pm[i] / bc1;
        const double vhat = pv[i] / bc2;
        pp[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  struct Moments {
    Matrix m, v;
  };

  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace adgan
