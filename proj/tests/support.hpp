// Shared helpers for the unit tests.
#pragma once

#include <vector>

#include "doctest.h"
#include "scgseg/gradcheck.hpp"
#include "scgseg/ops_core.hpp"
#include "scgseg/rng.hpp"
#include "scgseg/tensor.hpp"

namespace testsup {

inline scgseg::Tensor<double> rand_tensor(const scgseg::Shape& shape,
                                          scgseg::Rng& rng, double lo = -1.0,
                                          double hi = 1.0) {
  scgseg::Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

// Uniform values pushed away from zero; safe for relu/abs-style kinks.
inline scgseg::Tensor<double> rand_signed(const scgseg::Shape& shape,
                                          scgseg::Rng& rng,
                                          double margin = 0.1) {
  scgseg::Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double u = rng.uniform(margin, 1.0);
    t.data[i] = rng.uniform() < 0.5 ? -u : u;
  }
  return t;
}

// Random-weighted sum: a scalar root that is sensitive to every element of v.
inline scgseg::Var wsum(scgseg::Tape<double>& t, scgseg::Var v,
                        const scgseg::Tensor<double>& w) {
  return scgseg::sum(t, scgseg::mul(t, v, t.constant(w)));
}

template <typename Builder>
void check_grads(Builder&& build, std::vector<scgseg::Tensor<double>> inputs,
                 scgseg::ParamStore<double>* store = nullptr,
                 double tol = 1e-6, double h = 1e-5) {
  auto res =
      scgseg::grad_check(build, std::move(inputs), store, h);
  CAPTURE(res.worst);
  CAPTURE(res.checked);
  CHECK(res.max_rel <= tol);
}

}  // namespace testsup
