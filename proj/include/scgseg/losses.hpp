// Objectives and evaluation metrics. Training losses are soft relaxations on
// probabilities and run on the tape; evaluation metrics (hard dice) use
// confusion counts after thresholding. Both sums run over the flattened
// batch, so one scalar per batch.
#pragma once

#include <cmath>
#include <string>

#include "scgseg/ops_core.hpp"
#include "scgseg/scg.hpp"

namespace scgseg {

struct LossConfig {
  std::string objective = "dice_bce";  // dice | bce | dice_bce | focal_tversky
  double tversky_beta = 0.7;
  double focal_gamma = 4.0 / 3.0;
  double kl_weight = 1.0;
  double dl_weight = 1.0;
  double aux_weight = 0.3;  // deep-supervision BCE on the encoder's aux map
  double smooth = 1.0;
};

inline void validate_loss_config(const LossConfig& cfg) {
  if (cfg.objective != "dice" && cfg.objective != "bce" &&
      cfg.objective != "dice_bce" && cfg.objective != "focal_tversky")
    throw ConfigError("unknown objective '" + cfg.objective +
                      "' (expected dice, bce, dice_bce, or focal_tversky)");
  if (cfg.tversky_beta <= 0.0 || cfg.tversky_beta >= 1.0)
    throw ValidationError("tversky_beta must lie in (0,1), got " +
                          std::to_string(cfg.tversky_beta));
  if (cfg.focal_gamma < 1.0 || cfg.focal_gamma > 3.0)
    throw ValidationError("focal_gamma must lie in [1,3], got " +
                          std::to_string(cfg.focal_gamma));
  if (cfg.kl_weight < 0 || cfg.dl_weight < 0 || cfg.aux_weight < 0)
    throw ValidationError("loss weights must be non-negative");
  if (cfg.smooth <= 0.0)
    throw ValidationError("smooth must be positive");
}

inline constexpr double kProbClamp = 1e-7;

template <typename S>
Var dice_coefficient(Tape<S>& t, Var pred, Var target, double smooth) {
  detail::check_same_shape(t, pred, target, "dice_coefficient");
  Var inter = sum(t, mul(t, pred, target));
  Var num = add_const(t, scale(t, inter, 2.0), smooth);
  Var den = add_const(t, add(t, sum(t, pred), sum(t, target)), smooth);
  return divide(t, num, den);
}

template <typename S>
Var dice_loss(Tape<S>& t, Var pred, Var target, double smooth) {
  return add_const(t, neg(t, dice_coefficient(t, pred, target, smooth)), 1.0);
}

template <typename S>
Var bce_loss(Tape<S>& t, Var pred, Var target) {
  detail::check_same_shape(t, pred, target, "bce_loss");
  Var p = clamp(t, pred, kProbClamp, 1.0 - kProbClamp);
  Var pos = mul(t, target, log(t, p));
  Var negv = mul(t, add_const(t, neg(t, target), 1.0),
                 log(t, add_const(t, neg(t, p), 1.0)));
  return neg(t, mean(t, add(t, pos, negv)));
}

template <typename S>
Var tversky_index(Tape<S>& t, Var pred, Var target, double beta,
                  double smooth) {
  if (beta <= 0.0 || beta >= 1.0)
    throw ValidationError("tversky beta must lie in (0,1), got " +
                          std::to_string(beta));
  detail::check_same_shape(t, pred, target, "tversky_index");
  // Numerator and denominator are doubled before smoothing so that beta=1/2
  // with any smooth reduces exactly to the smoothed dice coefficient.
  Var tp = sum(t, mul(t, pred, target));
  Var fn = sum(t, mul(t, target, add_const(t, neg(t, pred), 1.0)));
  Var fp = sum(t, mul(t, pred, add_const(t, neg(t, target), 1.0)));
  Var num = add_const(t, scale(t, tp, 2.0), smooth);
  Var den = add_const(t,
                      add(t, scale(t, tp, 2.0),
                          add(t, scale(t, fn, 2.0 * (1.0 - beta)),
                              scale(t, fp, 2.0 * beta))),
                      smooth);
  return divide(t, num, den);
}

template <typename S>
Var focal_tversky_loss(Tape<S>& t, Var pred, Var target, double beta,
                       double gamma, double smooth) {
  if (gamma < 1.0 || gamma > 3.0)
    throw ValidationError("focal gamma must lie in [1,3], got " +
                          std::to_string(gamma));
  Var ti = tversky_index(t, pred, target, beta, smooth);
  return pow_const(t, add_const(t, neg(t, ti), 1.0), gamma);
}

struct LossBundle {
  Var primary, kl, dl, aux, total;
};

// total = primary + kl_w * kl + dl_w * dl + aux_w * aux. kl/dl come from the
// graph state; aux is BCE deep supervision on the encoder's coarse map.
template <typename S>
LossBundle composite_loss(Tape<S>& t, Var prob, Var aux_prob,
                          const GraphVars& graph, Var target,
                          const LossConfig& cfg) {
  validate_loss_config(cfg);
  LossBundle out;
  if (cfg.objective == "dice") {
    out.primary = dice_loss(t, prob, target, cfg.smooth);
  } else if (cfg.objective == "bce") {
    out.primary = bce_loss(t, prob, target);
  } else if (cfg.objective == "dice_bce") {
    out.primary = add(t, dice_loss(t, prob, target, cfg.smooth),
                      bce_loss(t, prob, target));
  } else {
    out.primary = focal_tversky_loss(t, prob, target, cfg.tversky_beta,
                                     cfg.focal_gamma, cfg.smooth);
  }
  out.kl = graph.kl;
  out.dl = graph.dl;
  out.aux = bce_loss(t, aux_prob, target);
  out.total = add(
      t, out.primary,
      add(t, scale(t, out.kl, cfg.kl_weight),
          add(t, scale(t, out.dl, cfg.dl_weight),
              scale(t, out.aux, cfg.aux_weight))));
  return out;
}

// Hard dice after thresholding: 2TP/(2TP+FP+FN) from confusion counts; the
// empty-vs-empty case is 1 by convention.
template <typename S>
double hard_dice(const Tensor<S>& pred_mask, const Tensor<S>& target) {
  // singleton channel dims may differ ({B,S,S} vs {B,1,S,S})
  if (pred_mask.size() != target.size())
    throw ShapeError("hard_dice: " + shape_str(pred_mask.shape) + " vs " +
                     shape_str(target.shape));
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::int64_t i = 0; i < pred_mask.size(); ++i) {
    const bool p = pred_mask.data[i] >= S(0.5);
    const bool y = target.data[i] >= S(0.5);
    tp += (p && y);
    fp += (p && !y);
    fn += (!p && y);
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * double(tp) / double(2 * tp + fp + fn);
}

// Soft focal-Tversky on probabilities, used as an evaluation metric.
template <typename S>
double ftl_metric(const Tensor<S>& prob, const Tensor<S>& target, double beta,
                  double gamma, double smooth) {
  Tape<S> t;
  Var p = t.constant(prob);
  Var y = t.constant(target);
  return static_cast<double>(
      t.val(focal_tversky_loss(t, p, y, beta, gamma, smooth)).data[0]);
}

}  // namespace scgseg
