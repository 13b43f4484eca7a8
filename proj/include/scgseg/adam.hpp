#pragma once

#include <cmath>
#include <vector>

#include "scgseg/params.hpp"

namespace scgseg {

// Adam with the standard moment defaults. Keeps one first/second-moment
// buffer per trainable entry; non-trainable entries (running statistics)
// are skipped entirely.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(ParamStore<Scalar>& store, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& e : store.entries()) {
      m_.push_back(Tensor<Scalar>::zeros(e.value.shape));
      v_.push_back(Tensor<Scalar>::zeros(e.value.shape));
    }
  }

  // One update from the gradients currently held in the store. Bias
  // correction is folded into the step size.
  void step() {
    ++t_;
    const double corr1 = 1.0 - std::pow(beta1_, t_);
    const double corr2 = 1.0 - std::pow(beta2_, t_);
    const double alpha = lr_ * std::sqrt(corr2) / corr1;
    auto& entries = store_.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!entries[i].trainable) continue;
      auto& g = entries[i].grad.data;
      m_[i].data = beta1_ * m_[i].data + (1.0 - beta1_) * g;
      v_[i].data = beta2_ * v_[i].data + (1.0 - beta2_) * g.square();
      entries[i].value.data -=
          alpha * m_[i].data / (v_[i].data.sqrt() + eps_ * std::sqrt(corr2));
    }
  }

  long long steps_taken() const { return t_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  ParamStore<Scalar>& store_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Tensor<Scalar>> m_, v_;
};

}  // namespace scgseg
