#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "slicenet/autodiff.hpp"

namespace slicenet::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline void randomize(Parameter& p, std::mt19937_64& rng, double scale = 1.0) {
  p.value = random_tensor(p.value.shape(), rng, scale);
  p.grad = Tensor(p.value.shape());
}

/// Scalar projection <out, R> with a fixed random R, so every output entry matters.
inline Var project(Tape& tape, Var out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(out, tape.constant(random_tensor(out.shape(), rng))));
}

struct GradCheck {
  double max_rel_error = 0.0;
};

/// Compares analytic gradients of `loss_fn` against central differences for
/// every entry of every parameter. Relative error per parameter is
/// ||a - n|| / max(||a|| + ||n||, 1e-12).
inline GradCheck check_gradients(const std::vector<Parameter*>& params,
                                 const std::function<Var(Tape&)>& loss_fn, double h = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss_fn(tape));
  }
  GradCheck result;
  for (Parameter* p : params) {
    const Tensor analytic = p->grad;
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      double up, down;
      {
        Tape t;
        up = loss_fn(t).value()[0];
      }
      p->value[i] = saved - h;
      {
        Tape t;
        down = loss_fn(t).value()[0];
      }
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      norm_a += analytic[i] * analytic[i];
      norm_n += numeric * numeric;
    }
    const double rel = std::sqrt(diff) / std::max(std::sqrt(norm_a) + std::sqrt(norm_n), 1e-12);
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  return result;
}

}  // namespace slicenet::testing
