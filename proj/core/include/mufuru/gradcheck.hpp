#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mufuru/tensor.hpp"

namespace mufuru {

/// A deterministic scalar function of the given parameters. The callable must
/// rebuild the computation on the tape it receives on every invocation.
using ScalarFn = std::function<Tensor(Tape&)>;

/// Compares the analytic gradient of `f` at the current parameter values
/// against central finite differences (f(p + eps e) - f(p - eps e)) / (2 eps)
/// for every element of every parameter, and returns the maximum relative
/// error max(|ga - gn| / max(|ga|, |gn|, 1e-8)). NaN in f propagates.
double grad_check(const ScalarFn& f, std::span<const Tensor> params,
                  double eps = 1e-5);

/// Per-parameter maxima, in the order the parameters were given.
std::vector<double> grad_check_per_param(const ScalarFn& f,
                                         std::span<const Tensor> params,
                                         double eps = 1e-5);

}  // namespace mufuru
