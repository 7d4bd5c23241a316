#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "aot/autodiff.hpp"
#include "aot/rng.hpp"

namespace aot::testutil {

using ad::Mat;

inline Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng,
                      double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central finite differences against the tape gradient. `forward` must
// rebuild the graph from the current ParamStore values and return the
// scalar loss. Near-zero gradient pairs (both below `dead_zone`) are
// skipped rather than producing 0/0 noise.
inline GradCheckResult grad_check(ad::ParamStore& params,
                                  const std::function<ad::Value()>& forward,
                                  double h = 1e-5,
                                  double dead_zone = 1e-8) {
  params.zero_grad();
  ad::Value loss = forward();
  ad::backward(loss);

  const std::size_t n = params.total_size();
  std::vector<double> analytic(n);
  for (std::size_t i = 0; i < n; ++i) analytic[i] = params.grad_flat(i);

  GradCheckResult res;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = params.get_flat(i);
    params.set_flat(i, x0 + h);
    const double fp = forward().item();
    params.set_flat(i, x0 - h);
    const double fm = forward().item();
    params.set_flat(i, x0);
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max(std::abs(a), std::abs(numeric));
    if (denom < dead_zone) continue;  // both effectively zero
    const double rel = std::abs(a - numeric) / denom;
    ++res.checked;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.analytic_at_worst = a;
      res.numeric_at_worst = numeric;
    }
  }
  return res;
}

}  // namespace aot::testutil
