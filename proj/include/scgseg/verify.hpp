#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "scgseg/checkpoint.hpp"
#include "scgseg/gradcheck.hpp"
#include "scgseg/losses.hpp"
#include "scgseg/model.hpp"
#include "scgseg/rng.hpp"

namespace scgseg {

// Self-check registry behind the `verify` subcommand and the acceptance
// runner: analytic values against hand-derived constants, analytic vs
// finite-difference gradients, structural facts about the built model, the
// parameter-count claim, randomized invariants, and a mutation probe that
// proves the gradient checker can actually catch a broken backward pass.

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  std::int64_t param_count = 0;
  std::int64_t unet64_params = 0;
  double param_ratio = 0;
  bool all_pass = true;
};

// Analytic parameter count of the reference encoder-decoder: 64 base
// channels doubling to 1024, two 3x3 convs per stage, 2x2 up-convolutions,
// skip concatenation, final 1x1 projection. Biases included, no batch norm.
inline std::int64_t unet64_param_count() {
  auto conv = [](std::int64_t cin, std::int64_t cout, std::int64_t k) {
    return cout * cin * k * k + cout;
  };
  std::int64_t n = 0;
  std::int64_t c = 1;
  for (std::int64_t ch : {64, 128, 256, 512}) {
    n += conv(c, ch, 3) + conv(ch, ch, 3);
    c = ch;
  }
  n += conv(512, 1024, 3) + conv(1024, 1024, 3);
  c = 1024;
  for (std::int64_t ch : {512, 256, 128, 64}) {
    n += ch * c * 2 * 2 + ch;            // 2x2 up-convolution
    n += conv(c, ch, 3) + conv(ch, ch, 3);  // input is up + skip = c channels
    c = ch;
  }
  n += conv(64, 1, 1);
  return n;
}

namespace detail {
using T = Tensor<double>;

inline T rand_tensor(Shape s, Rng& rng, double lo, double hi) {
  T t(std::move(s));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

inline T rand_binary(Shape s, Rng& rng) {
  T t(std::move(s));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.data[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  return t;
}

// Identity forward, negated backward: composing this onto a loss leaves its
// value untouched while corrupting every gradient downstream. The mutation
// check requires the gradient checker to flag it.
inline Var flip_gradient(Tape<double>& t, Var x) {
  Var out = t.push(t.val(x), t.needs_grad(x), nullptr);
  t.set_backward(out, [out, x](Tape<double>& tp) {
    T g = tp.grad(out);
    g.data = -g.data;
    tp.accum(x, g);
  });
  return out;
}

inline ModelConfig tiny_model_config(int input_size) {
  ModelConfig cfg;
  cfg.cnn.base_channels = 2;
  cfg.cnn.input_size = input_size;
  cfg.cnn.dropout_p = 0.0;
  cfg.scg.node_h = std::min(16, input_size / 8);
  cfg.scg.node_w = std::min(16, input_size / 8);
  cfg.scg.latent_dim = 4;
  cfg.head.fuse_channels = 3;
  cfg.head.dropout_p = 0.0;
  return cfg;
}

class Runner {
 public:
  explicit Runner(VerifyReport& rep) : rep_(rep) {}

  void run(const std::string& name, const std::function<std::string()>& fn) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.detail = fn();
      r.pass = true;
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    r.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    rep_.all_pass = rep_.all_pass && r.pass;
    rep_.checks.push_back(std::move(r));
  }

 private:
  VerifyReport& rep_;
};

inline void expect(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline void expect_near(double got, double want, double tol,
                        const std::string& what) {
  if (!(std::abs(got - want) <= tol)) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": got " << got << ", want " << want << " (tol " << tol
       << ")";
    throw ValidationError(os.str());
  }
}
}  // namespace detail

// `trials` drives the randomized invariants; `e2e_params` is how many
// sampled parameters the end-to-end gradient probe compares against central
// differences.
inline VerifyReport run_verification(std::uint64_t seed, int trials = 1000,
                                     int e2e_params = 20) {
  using detail::expect;
  using detail::expect_near;
  using detail::rand_binary;
  using detail::rand_tensor;
  using T = Tensor<double>;
  VerifyReport rep;
  detail::Runner run(rep);

  // ---- analytic values ----
  run.run("analytic.kl_values", [&] {
    Tape<double> t;
    Var z = t.input(T::zeros({1, 2, 3}));
    expect_near(t.val(kl_loss(t, z, z)).data[0], 0.0, 1e-12, "kl(0,0)");
    expect_near(t.val(kl_loss(t, t.input(T::full({1, 1, 1}, 1.0)),
                              t.input(T::zeros({1, 1, 1}))))
                    .data[0],
                0.5, 1e-9, "kl(mu=1,logsig=0)");
    expect_near(t.val(kl_loss(t, t.input(T::zeros({1, 1, 1})),
                              t.input(T::full({1, 1, 1}, 1.0))))
                    .data[0],
                2.6945280494653248, 1e-9, "kl(mu=0,logsig=1)");
    expect_near(t.val(kl_loss(t, t.input(T::full({2, 1, 1}, 1.0)),
                              t.input(T::zeros({2, 1, 1}))))
                    .data[0],
                0.5, 1e-9, "kl batch average");
    return "4 hand values";
  });

  run.run("analytic.adjacency", [&] {
    Tape<double> t;
    Var z = t.input(T::from({1, 2, 1}, {1.0, -2.0}));
    const T a = t.val(build_adjacency(t, z));
    expect_near(a.at(0, 0, 0), 1.0, 1e-9, "A[0,0]");
    expect_near(a.at(0, 0, 1), 0.0, 1e-9, "A[0,1]");
    expect_near(a.at(0, 1, 0), 0.0, 1e-9, "A[1,0]");
    expect_near(a.at(0, 1, 1), 4.0, 1e-9, "A[1,1]");
    return "relu(Z Z^T) hand product";
  });

  run.run("analytic.normalized_adjacency", [&] {
    Tape<double> t;
    Var a = t.input(T::from({1, 2, 2}, {0.0, 1.0, 1.0, 0.0}));
    const T ah = t.val(normalize_adjacency(t, a, GcnNorm::symmetric));
    for (std::int64_t i = 0; i < 4; ++i)
      expect_near(ah.data[i], 0.5, 1e-9, "A_hat entry");
    return "two-node ring normalizes to 0.5";
  });

  run.run("analytic.losses", [&] {
    Tape<double> t;
    Var p = t.input(T::from({1, 1, 3, 3}, {1, 1, 1, 1, 0, 0, 0, 0, 0}));
    Var y = t.constant(T::from({1, 1, 3, 3}, {1, 1, 1, 0, 1, 0, 0, 0, 0}));
    expect_near(t.val(dice_coefficient(t, p, y, 0.0)).data[0], 0.75, 1e-9,
                "dice 6/8");
    Var half = t.input(T::full({1, 1, 2, 2}, 0.5));
    Var ones = t.constant(T::full({1, 1, 2, 2}, 1.0));
    expect_near(t.val(bce_loss(t, half, ones)).data[0],
                0.6931471805599453, 1e-9, "bce ln 2");
    expect_near(t.val(tversky_index(t, p, y, 0.7, 0.0)).data[0], 0.75, 1e-9,
                "tversky 0.75");
    expect_near(t.val(focal_tversky_loss(t, p, y, 0.7, 2.0, 0.0)).data[0],
                0.0625, 1e-9, "ftl 0.0625");
    return "dice/bce/tversky/ftl hand values";
  });

  // ---- gradients ----
  run.run("gradient.losses", [&] {
    Rng rng(mix_seed(seed, 1));
    const T pred = rand_tensor({1, 1, 4, 4}, rng, 0.1, 0.9);
    const T targ = rand_binary({1, 1, 4, 4}, rng);
    double worst = 0;
    for (int which = 0; which < 4; ++which) {
      auto res = grad_check(
          [&, which](Tape<double>& t, const std::vector<Var>& in) {
            Var y = t.constant(targ);
            switch (which) {
              case 0: return dice_loss(t, in[0], y, 1.0);
              case 1: return bce_loss(t, in[0], y);
              case 2: return add_const(
                          t, neg(t, tversky_index(t, in[0], y, 0.7, 1.0)),
                          1.0);
              default:
                return focal_tversky_loss(t, in[0], y, 0.7, 4.0 / 3.0, 1.0);
            }
          },
          {pred});
      worst = std::max(worst, res.max_rel);
    }
    expect(worst < 1e-6, "loss gradient rel err " + std::to_string(worst));
    return "4 objectives, worst rel err " + std::to_string(worst);
  });

  run.run("gradient.scg", [&] {
    Rng rng(mix_seed(seed, 2));
    const T m = rand_tensor({1, 3, 2}, rng, -0.6, 0.6);
    const T ls = rand_tensor({1, 3, 2}, rng, -0.5, 0.5);
    auto kl = grad_check(
        [](Tape<double>& t, const std::vector<Var>& in) {
          return kl_loss(t, in[0], in[1]);
        },
        {m, ls});
    // Z entries bounded away from relu and log-clamp kinks
    const T z = rand_tensor({1, 4, 3}, rng, 0.2, 0.45);
    auto dl = grad_check(
        [](Tape<double>& t, const std::vector<Var>& in) {
          Var a = build_adjacency(t, in[0]);
          return diagonal_log_loss(t, a, ScgConfig{}.epsilon).dl;
        },
        {z});
    auto enh = grad_check(
        [](Tape<double>& t, const std::vector<Var>& in) {
          Var a = build_adjacency(t, in[0]);
          auto d = diagonal_log_loss(t, a, ScgConfig{}.epsilon);
          Var e = enhance_adjacency(t, a, d.factor_b);
          return sum(t, mul(t, e, e));
        },
        {z});
    const double worst =
        std::max({kl.max_rel, dl.max_rel, enh.max_rel});
    expect(worst < 1e-4, "scg gradient rel err " + std::to_string(worst));
    return "kl/dl/enhancement, worst rel err " + std::to_string(worst);
  });

  run.run("gradient.gcn", [&] {
    Rng rng(mix_seed(seed, 3));
    ParamStore<double> store;
    Rng init(mix_seed(seed, 4));
    build_gcn(3, 2, store, init);
    const T z = rand_tensor({1, 4, 3}, rng, 0.2, 0.45);
    const T w = rand_tensor({1, 4, 2}, rng, 0.5, 1.5);
    auto res = grad_check(
        [&](Tape<double>& t, const std::vector<Var>& in) {
          Var a = build_adjacency(t, in[0]);
          Var ah = normalize_adjacency(t, a, GcnNorm::symmetric);
          Var out = gcn_forward(t, ah, in[0], store, Activation::relu);
          return sum(t, mul(t, out, t.constant(w)));
        },
        {z}, &store);
    expect(res.max_rel < 1e-4,
           "gcn gradient rel err " + std::to_string(res.max_rel));
    return "theta/bias/Z chain, worst rel err " + std::to_string(res.max_rel);
  });

  run.run("gradient.end_to_end", [&] {
    ModelConfig cfg = detail::tiny_model_config(32);
    ParamStore<double> store;
    Rng init(mix_seed(seed, 5));
    build_model(cfg, store, init);
    Rng drng(mix_seed(seed, 6));
    const T x = rand_tensor({1, 1, 32, 32}, drng, 0.1, 0.9);
    T target = T::zeros({1, 1, 32, 32});
    for (int yy = 10; yy < 22; ++yy)
      for (int xx = 8; xx < 20; ++xx) target.at(0, 0, yy, xx) = 1.0;

    auto eval_loss = [&](bool backward) {
      Tape<double> t;
      RunMode mode;
      mode.train = true;
      mode.update_running = false;
      Rng noise(7);
      mode.rng = &noise;
      auto out = model_forward(t, t.input(x), store, cfg, mode);
      LossConfig lc;
      auto bundle = composite_loss(t, out.prob, out.aux_prob, out.graph,
                                   t.constant(target), lc);
      const double v = t.val(bundle.total).data[0];
      if (backward) t.backward(bundle.total);
      return v;
    };
    store.zero_grad();
    expect(std::isfinite(eval_loss(true)), "non-finite end-to-end loss");

    Rng pick(mix_seed(seed, 8));
    double worst = 0;
    int checked = 0;
    while (checked < e2e_params) {
      for (const auto& e : store.entries()) {
        if (checked >= e2e_params) break;
        if (!e.trainable) continue;
        if (pick.uniform() < 0.5) continue;
        const int pid = store.id(e.name);
        const std::int64_t j = pick.uniform_int(e.value.size());
        auto& v = store.value(pid);
        // Two step sizes: a relu/pool kink inside [x-h, x+h] wrecks one
        // estimate but not the other, while a wrong gradient fails both.
        double best = 1e30;
        for (const double h : {1e-5, 1e-6}) {
          const double saved = v.data[j];
          v.data[j] = saved + h;
          const double fp = eval_loss(false);
          v.data[j] = saved - h;
          const double fm = eval_loss(false);
          v.data[j] = saved;
          best = std::min(
              best, rel_err(store.grad(pid).data[j], (fp - fm) / (2 * h)));
          if (best < 1e-4) break;
        }
        worst = std::max(worst, best);
        ++checked;
      }
    }
    expect(worst < 1e-3,
           "end-to-end gradient rel err " + std::to_string(worst));
    return std::to_string(checked) + " params, worst rel err " +
           std::to_string(worst);
  });

  // ---- structure ----
  run.run("structural.conv_pool_count", [&] {
    CnnConfig cfg;
    expect(cnn_conv_count(cfg) == 14,
           "conv count " + std::to_string(cnn_conv_count(cfg)));
    expect(cnn_pool_count(cfg) == 3,
           "pool count " + std::to_string(cnn_pool_count(cfg)));
    return "14 convolutions, 3 pools";
  });

  run.run("structural.fusion_width", [&] {
    expect(HeadConfig{}.fuse_channels == 16, "default fusion width not 16");
    ModelConfig cfg;
    cfg.scg.node_h = cfg.scg.node_w = 4;
    ParamStore<double> store;
    Rng init(mix_seed(seed, 9));
    build_model(cfg, store, init);
    const auto& w = store.value(store.id("head.fuse1.w"));
    expect(w.dim(0) == 16, "built fusion width " + std::to_string(w.dim(0)));
    return "fusion channel width 16";
  });

  run.run("structural.output_shapes", [&] {
    for (int s : {32, 64, 128}) {
      ModelConfig cfg;
      cfg.cnn.input_size = s;
      cfg.scg.node_h = cfg.scg.node_w = std::min(16, s / 8);
      ParamStore<double> store;
      Rng init(mix_seed(seed, 10));
      build_model(cfg, store, init);
      Tape<double> t;
      Rng drng(mix_seed(seed, 11));
      Var x = t.constant(rand_tensor({1, 1, s, s}, drng, 0.0, 1.0));
      auto out = model_forward(t, x, store, cfg, RunMode::eval());
      const T& p = t.val(out.prob);
      expect(p.shape == Shape{1, 1, s, s},
             "output shape " + shape_str(p.shape) + " at S=" +
                 std::to_string(s));
      for (std::int64_t i = 0; i < p.size(); ++i)
        expect(p.data[i] > 0.0 && p.data[i] < 1.0,
               "probability outside (0,1) at S=" + std::to_string(s));
    }
    return "1x1xSxS in (0,1) for S=32/64/128";
  });

  run.run("params.ratio", [&] {
    ModelConfig cfg;  // base 16 defaults
    ParamStore<double> store;
    Rng init(mix_seed(seed, 12));
    build_model(cfg, store, init);
    rep.param_count = store.trainable_count();
    rep.unet64_params = unet64_param_count();
    rep.param_ratio =
        double(rep.param_count) / double(rep.unet64_params);
    expect(rep.param_ratio <= 0.6,
           "parameter ratio " + std::to_string(rep.param_ratio));
    std::ostringstream os;
    os << rep.param_count << " / " << rep.unet64_params << " = "
       << rep.param_ratio;
    return os.str();
  });

  // ---- randomized invariants ----
  run.run("invariance.adjacency", [&] {
    Rng rng(mix_seed(seed, 13));
    for (int i = 0; i < trials; ++i) {
      Tape<double> t;
      Var z = t.constant(rand_tensor({1, 5, 3}, rng, -1.0, 1.0));
      const T a = t.val(build_adjacency(t, z));
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
          expect(a.at(0, r, c) >= 0.0, "negative adjacency entry");
          expect(std::abs(a.at(0, r, c) - a.at(0, c, r)) < 1e-12,
                 "asymmetric adjacency");
        }
    }
    return std::to_string(trials) + " trials";
  });

  run.run("invariance.enhancement", [&] {
    Rng rng(mix_seed(seed, 14));
    for (int i = 0; i < trials; ++i) {
      Tape<double> t;
      Var z = t.constant(rand_tensor({1, 4, 3}, rng, 0.05, 1.0));
      Var a = build_adjacency(t, z);
      auto d = diagonal_log_loss(t, a, ScgConfig{}.epsilon);
      const T before = t.val(a);
      const T after = t.val(enhance_adjacency(t, a, d.factor_b));
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
          if (r == c)
            expect(after.at(0, r, c) >= before.at(0, r, c),
                   "diagonal not strengthened");
          else
            expect(after.at(0, r, c) == before.at(0, r, c),
                   "off-diagonal changed by enhancement");
        }
    }
    return std::to_string(trials) + " trials";
  });

  run.run("invariance.factor_monotonic", [&] {
    Rng rng(mix_seed(seed, 15));
    for (int i = 0; i < trials; ++i) {
      const double n = 1 + rng.uniform_int(8);
      const double t1 = rng.uniform(0.01, 30.0);
      const double t2 = t1 + rng.uniform(0.01, 10.0);
      const double f1 = std::sqrt(1.0 + n / (t1 + 1e-7));
      const double f2 = std::sqrt(1.0 + n / (t2 + 1e-7));
      expect(f2 < f1, "factor not decreasing in the trace");
    }
    return std::to_string(trials) + " trials";
  });

  run.run("invariance.tversky_dice", [&] {
    Rng rng(mix_seed(seed, 16));
    for (int i = 0; i < trials; ++i) {
      Tape<double> t;
      Var p = t.constant(rand_tensor({1, 1, 3, 3}, rng, 0.0, 1.0));
      Var y = t.constant(rand_binary({1, 1, 3, 3}, rng));
      const double sm = rng.uniform(0.0, 2.0);
      const double tv = t.val(tversky_index(t, p, y, 0.5, sm)).data[0];
      const double dc = t.val(dice_coefficient(t, p, y, sm)).data[0];
      expect(std::abs(tv - dc) < 1e-10, "tversky(beta=1/2) != dice");
    }
    return std::to_string(trials) + " trials";
  });

  run.run("invariance.checkpoint_roundtrip", [&] {
    namespace fs = std::filesystem;
    const fs::path path =
        fs::temp_directory_path() / "scgseg_verify_roundtrip.ckpt";
    Rng rng(mix_seed(seed, 17));
    ParamStore<double> a, b;
    for (int i = 0; i < 4; ++i) {
      const std::string name = "p" + std::to_string(i);
      a.add(name, T::zeros({3, 5}), i % 2 == 0);
      b.add(name, T::zeros({3, 5}), i % 2 == 0);
    }
    for (int i = 0; i < trials; ++i) {
      for (auto& e : a.entries())
        for (std::int64_t j = 0; j < e.value.size(); ++j)
          e.value.data[j] = rng.uniform(-1e3, 1e3);
      save_checkpoint(path.string(), a, 123u, i);
      load_checkpoint(path.string(), b);
      for (int k = 0; k < a.count(); ++k)
        for (std::int64_t j = 0; j < a.value(k).size(); ++j)
          expect(std::memcmp(&a.value(k).data[j], &b.value(k).data[j],
                             sizeof(double)) == 0,
                 "round-trip not bitwise identical");
    }
    fs::remove(path);
    return std::to_string(trials) + " trials";
  });

  // ---- mutation probe ----
  run.run("mutation.kl_gradient", [&] {
    Rng rng(mix_seed(seed, 18));
    const T m = rand_tensor({1, 3, 2}, rng, -0.6, 0.6);
    const T ls = rand_tensor({1, 3, 2}, rng, -0.5, 0.5);
    auto res = grad_check(
        [](Tape<double>& t, const std::vector<Var>& in) {
          return detail::flip_gradient(t, kl_loss(t, in[0], in[1]));
        },
        {m, ls});
    expect(res.max_rel > 0.1,
           "sign-flipped kl gradient was not detected (rel err " +
               std::to_string(res.max_rel) + ")");
    return "sign flip detected, rel err " + std::to_string(res.max_rel);
  });

  return rep;
}

inline nlohmann::json report_json(const VerifyReport& rep) {
  nlohmann::json j;
  j["all_pass"] = rep.all_pass;
  j["param_count"] = rep.param_count;
  j["unet64_params"] = rep.unet64_params;
  j["param_ratio"] = rep.param_ratio;
  auto& arr = j["checks"] = nlohmann::json::array();
  for (const auto& c : rep.checks)
    arr.push_back({{"name", c.name},
                   {"pass", c.pass},
                   {"detail", c.detail},
                   {"seconds", c.seconds}});
  return j;
}

}  // namespace scgseg
