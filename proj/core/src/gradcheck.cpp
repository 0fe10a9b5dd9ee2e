#include "mufuru/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mufuru {

static double relative_error(double ga, double gn) {
  if (std::isnan(ga) || std::isnan(gn)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double denom = std::fmax(std::fmax(std::fabs(ga), std::fabs(gn)), 1e-8);
  return std::fabs(ga - gn) / denom;
}

std::vector<double> grad_check_per_param(const ScalarFn& f,
                                         std::span<const Tensor> params,
                                         double eps) {
  if (eps <= 0.0) throw ArgumentError("grad_check eps must be positive");

  // Analytic pass. Grads left over from earlier backward passes are cleared
  // so parameters that do not participate in f read as zero.
  std::vector<std::vector<double>> analytic(params.size());
  for (const Tensor& t : params) {
    if (t.has_grad()) {
      std::fill(t.node()->grad.begin(), t.node()->grad.end(), 0.0);
    }
  }
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Tensor& t = params[p];
      if (t.has_grad()) {
        auto g = t.node()->grad;
        analytic[p] = g;
      } else {
        analytic[p].assign(static_cast<std::size_t>(t.size()), 0.0);
      }
    }
  }

  auto eval = [&f]() {
    Tape tape(false);
    return f(tape).item();
  };

  std::vector<double> per_param(params.size(), 0.0);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p];
    auto vals = t.value();
    double worst = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double up = eval();
      vals[i] = saved - eps;
      const double down = eval();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[p][i], numeric);
      if (std::isnan(err)) {
        worst = err;
        break;
      }
      worst = std::fmax(worst, err);
    }
    per_param[p] = worst;
  }
  return per_param;
}

double grad_check(const ScalarFn& f, std::span<const Tensor> params,
                  double eps) {
  double worst = 0.0;
  for (double e : grad_check_per_param(f, params, eps)) {
    if (std::isnan(e)) return e;
    worst = std::fmax(worst, e);
  }
  return worst;
}

}  // namespace mufuru
