#include "doctest.h"
#include "scgseg/cnn.hpp"
#include "support.hpp"

using namespace scgseg;
using T = Tensor<double>;

TEST_CASE("encoder structure: 14 convolutions, 3 pools") {
  CnnConfig cfg;
  CHECK(cnn_conv_count(cfg) == 14);
  CHECK(cnn_pool_count(cfg) == 3);
  // widths follow the 1 -> b -> 2b -> 4b -> 8b schedule
  auto table = cnn_conv_table(cfg);
  CHECK(table[0].in_ch == 1);
  CHECK(table[10].out_ch == 8 * cfg.base_channels);
  CHECK(table[13].out_ch == 1);
  for (const auto& c : table) {
    if (c.name != "conv14") CHECK(c.bn);
  }
}

TEST_CASE("builds are deterministic under a fixed seed") {
  CnnConfig cfg;
  cfg.base_channels = 4;
  ParamStore<double> a, b;
  Rng ra(5), rb(5);
  build_cnn(cfg, a, ra);
  build_cnn(cfg, b, rb);
  REQUIRE(a.entries().size() == b.entries().size());
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    CHECK(a.entries()[i].name == b.entries()[i].name);
    for (std::int64_t j = 0; j < a.entries()[i].value.size(); ++j)
      CHECK(a.entries()[i].value.data[j] == b.entries()[i].value.data[j]);
  }
  CHECK_THROWS_AS(build_cnn(CnnConfig{0, 64, 0.5}, a, ra), ValidationError);
}

TEST_CASE("forward emits the 1, 1/2, 1/4, 1/8 scale schedule") {
  CnnConfig cfg;
  cfg.base_channels = 16;
  ParamStore<double> store;
  Rng rng(3);
  build_cnn(cfg, store, rng);
  Tape<double> t;
  Rng drng(4);
  Var x = t.input(testsup::rand_tensor({2, 1, 128, 128}, drng, 0.0, 1.0));
  auto out = cnn_forward(t, x, store, cfg, RunMode::eval());
  CHECK(t.val(out.skip1).shape == Shape{2, 16, 128, 128});
  CHECK(t.val(out.skip2).shape == Shape{2, 32, 64, 64});
  CHECK(t.val(out.skip3).shape == Shape{2, 64, 32, 32});
  CHECK(t.val(out.deep).shape == Shape{2, 128, 16, 16});
  CHECK(t.val(out.aux_prob).shape == Shape{2, 1, 128, 128});
  const auto& aux = t.val(out.aux_prob);
  for (std::int64_t i = 0; i < aux.size(); ++i) {
    CHECK(aux.data[i] > 0.0);
    CHECK(aux.data[i] < 1.0);
  }
}

TEST_CASE("input validation names the offending dimension") {
  CnnConfig cfg;
  cfg.base_channels = 2;
  ParamStore<double> store;
  Rng rng(1);
  build_cnn(cfg, store, rng);
  Tape<double> t;
  CHECK_THROWS_AS(
      cnn_forward(t, t.input(T({1, 3, 16, 16})), store, cfg, RunMode::eval()),
      ShapeError);
  CHECK_THROWS_AS(
      cnn_forward(t, t.input(T({1, 1, 20, 20})), store, cfg, RunMode::eval()),
      ShapeError);
  CHECK_THROWS_AS(
      cnn_forward(t, t.input(T({1, 1, 16, 24})), store, cfg, RunMode::eval()),
      ShapeError);
}

TEST_CASE("eval mode is pure; train mode without rng is rejected") {
  CnnConfig cfg;
  cfg.base_channels = 2;
  ParamStore<double> store;
  Rng rng(9);
  build_cnn(cfg, store, rng);
  Rng drng(10);
  T x = testsup::rand_tensor({1, 1, 16, 16}, drng, 0.0, 1.0);

  auto run = [&]() {
    Tape<double> t;
    return t.val(
        cnn_forward(t, t.input(x), store, cfg, RunMode::eval()).aux_prob);
  };
  auto a = run();
  auto b = run();
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);

  Tape<double> t;
  RunMode bad;
  bad.train = true;
  CHECK_THROWS_AS(cnn_forward(t, t.input(x), store, cfg, bad),
                  ValidationError);
}

TEST_CASE("trainable count matches hand arithmetic for one conv") {
  ParamStore<double> store;
  Rng rng(2);
  store.add("w", kaiming_normal<double>({16, 1, 3, 3}, 9, rng));
  store.add("b", Tensor<double>::zeros({16}));
  CHECK(store.trainable_count() == 160);
  ParamStore<double> empty;
  CHECK(empty.trainable_count() == 0);
}

TEST_CASE("encoder gradients flow to the input") {
  CnnConfig cfg;
  cfg.base_channels = 2;
  cfg.dropout_p = 0.0;  // keep the graph deterministic for replays
  ParamStore<double> store;
  Rng rng(21);
  build_cnn(cfg, store, rng);
  Rng drng(22);
  T w = testsup::rand_tensor({1, 1, 8, 8}, drng);
  testsup::check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        RunMode mode;  // batch statistics active, no running-stat writes
        mode.train = true;
        mode.update_running = false;
        Rng r(1);
        mode.rng = &r;
        auto out = cnn_forward(t, in[0], store, cfg, mode);
        return testsup::wsum(t, out.aux_prob, w);
      },
      {testsup::rand_tensor({1, 1, 8, 8}, drng, 0.1, 0.9)}, nullptr, 1e-3,
      1e-5);
}
