// Central-difference gradient checking. A builder closure reconstructs the
// whole graph from leaf tensors, so each perturbed evaluation replays the
// exact same computation; anything stochastic inside the builder must be
// pinned (fixed noise, fixed masks) by the caller.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "scgseg/params.hpp"
#include "scgseg/tape.hpp"

namespace scgseg {

inline double rel_err(double a, double b, double floor_ = 1e-6) {
  return std::abs(a - b) /
         std::max({std::abs(a), std::abs(b), floor_});
}

struct GradCheckResult {
  double max_rel = 0.0;  // worst relative error over all checked elements
  std::string worst;     // "input 2 [14]" / "param conv1.w [3]"
  std::int64_t checked = 0;
};

// Builder: Var(Tape<double>&, const std::vector<Var>& leaves). Leaves are
// created from `inputs` in order; parameters are read from `store` inside the
// builder. Every element of every input and every trainable parameter is
// perturbed by +/-h.
template <typename Builder>
GradCheckResult grad_check(Builder&& build, std::vector<Tensor<double>> inputs,
                           ParamStore<double>* store = nullptr,
                           double h = 1e-5, double floor_ = 1e-6) {
  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> t;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(t.input(x));
    Var root = build(t, vars);
    if (t.val(root).size() != 1)
      throw ValidationError("grad_check: builder must return a scalar");
    return static_cast<double>(t.val(root).data[0]);
  };

  // Analytic pass.
  std::vector<Tensor<double>> agrad;
  std::vector<std::pair<int, Tensor<double>>> pgrad;  // (param id, grad)
  {
    Tape<double> t;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(t.input(x));
    Var root = build(t, vars);
    if (store) store->zero_grad();
    t.backward(root);
    for (Var v : vars) agrad.push_back(t.grad(v));
    if (store)
      for (const auto& e : store->entries())
        if (e.trainable) pgrad.emplace_back(store->id(e.name), e.grad);
  }

  GradCheckResult res;
  auto record = [&](double a, double fd, const std::string& where) {
    const double r = rel_err(a, fd, floor_);
    ++res.checked;
    if (r > res.max_rel) {
      res.max_rel = r;
      res.worst = where;
    }
  };

  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::int64_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = inputs[i].data[j];
      inputs[i].data[j] = saved + h;
      const double fp = eval(inputs);
      inputs[i].data[j] = saved - h;
      const double fm = eval(inputs);
      inputs[i].data[j] = saved;
      record(agrad[i].data[j], (fp - fm) / (2.0 * h),
             "input " + std::to_string(i) + " [" + std::to_string(j) + "]");
    }

  for (const auto& [pid, g] : pgrad) {
    auto& val = store->value(pid);
    for (std::int64_t j = 0; j < val.size(); ++j) {
      const double saved = val.data[j];
      val.data[j] = saved + h;
      const double fp = eval(inputs);
      val.data[j] = saved - h;
      const double fm = eval(inputs);
      val.data[j] = saved;
      record(g.data[j], (fp - fm) / (2.0 * h),
             "param " + store->entry(pid).name + " [" + std::to_string(j) +
                 "]");
    }
  }
  return res;
}

}  // namespace scgseg
