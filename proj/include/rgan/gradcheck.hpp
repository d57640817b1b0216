#pragma once

// Central-difference gradient verification oracle. Meant to run at 64-bit
// precision; returns the max relative error over coordinates, or +inf when
// the function produces non-finite values.

#include "rgan/tensor.hpp"

#include <limits>

namespace rgan {

template <typename S>
S finite_difference_check(const std::function<Tensor<S>(const Tensor<S>&)>& f,
                          const Tensor<S>& point, S eps) {
  if (eps <= S(0)) throw std::invalid_argument("finite_difference_check: eps must be positive");

  Tensor<S> x = point.clone();
  x.set_requires_grad(true);
  ArrayX<S> analytic = ArrayX<S>::Zero(x.size());
  {
    Tape<S> tape;
    Tensor<S> y = f(x);
    if (y.size() != 1)
      throw std::invalid_argument("finite_difference_check: f must return a scalar");
    if (!y.all_finite()) return std::numeric_limits<S>::infinity();
    if (y.requires_grad()) {
      tape.backward(y);
      if (x.has_grad()) analytic = x.grad();
    }
  }

  NoGrad<S> off;
  Tensor<S> probe = point.clone();
  S max_err = S(0);
  for (long i = 0; i < probe.size(); ++i) {
    const S orig = probe.val()[i];
    probe.val()[i] = orig + eps;
    const S fp = f(probe).item();
    probe.val()[i] = orig - eps;
    const S fm = f(probe).item();
    probe.val()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) return std::numeric_limits<S>::infinity();
    const S numeric = (fp - fm) / (S(2) * eps);
    const S denom = std::max({std::abs(analytic[i]), std::abs(numeric), S(1e-8)});
    max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
  }
  return max_err;
}

}  // namespace rgan
