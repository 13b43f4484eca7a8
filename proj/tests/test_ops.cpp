#include <cmath>

#include "doctest.h"
#include "scgseg/ops_core.hpp"
#include "scgseg/ops_nn.hpp"
#include "support.hpp"

using namespace scgseg;
using testsup::check_grads;
using testsup::rand_signed;
using testsup::rand_tensor;
using testsup::wsum;

using T = Tensor<double>;

TEST_CASE("elementwise values") {
  Tape<double> t;
  Var a = t.input(T::from({2, 2}, {1, 2, 3, 4}));
  Var b = t.input(T::from({2, 2}, {5, 6, 7, 8}));
  CHECK(t.val(add(t, a, b)).data[3] == 12.0);
  CHECK(t.val(sub(t, a, b)).data[0] == -4.0);
  CHECK(t.val(mul(t, a, b)).data[1] == 12.0);
  CHECK(t.val(divide(t, b, a)).data[3] == 2.0);
  CHECK(t.val(scale(t, a, -2.0)).data[2] == -6.0);
  CHECK(t.val(add_const(t, a, 0.5)).data[0] == 1.5);
  CHECK(t.val(neg(t, a)).data[0] == -1.0);
  CHECK_THROWS_AS(add(t, a, t.input(T({3}))), ShapeError);
}

TEST_CASE("unary values") {
  Tape<double> t;
  Var x = t.input(T::from({4}, {-2, -0.5, 0.5, 2}));
  CHECK(t.val(relu(t, x)).data[0] == 0.0);
  CHECK(t.val(relu(t, x)).data[3] == 2.0);
  CHECK(t.val(sigmoid(t, t.input(T::scalar(0)))).data[0] == 0.5);
  // saturating tails must not overflow
  CHECK(t.val(sigmoid(t, t.input(T::scalar(-800)))).data[0] == 0.0);
  CHECK(t.val(sigmoid(t, t.input(T::scalar(800)))).data[0] == 1.0);
  Var c = clamp(t, x, -1.0, 1.0);
  CHECK(t.val(c).data[0] == -1.0);
  CHECK(t.val(c).data[2] == 0.5);
  CHECK(t.val(exp(t, t.input(T::scalar(1)))).data[0] ==
        doctest::Approx(std::exp(1.0)));
  CHECK(t.val(log(t, t.input(T::scalar(std::exp(2.0))))).data[0] ==
        doctest::Approx(2.0));
  CHECK(t.val(pow_const(t, t.input(T::scalar(4)), 0.5)).data[0] ==
        doctest::Approx(2.0));
}

TEST_CASE("reduction values") {
  Tape<double> t;
  Var x = t.input(T::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK(t.val(sum(t, x)).data[0] == 21.0);
  CHECK(t.val(mean(t, x)).data[0] == 3.5);
  auto sb = t.val(sum_batch(t, x));
  CHECK(sb.shape == Shape{2});
  CHECK(sb.data[0] == 6.0);
  CHECK(sb.data[1] == 15.0);
  Var s = t.input(T::from({2}, {10, 100}));
  auto ms = t.val(mul_bscalar(t, x, s));
  CHECK(ms.data[0] == 10.0);
  CHECK(ms.data[5] == 600.0);
}

TEST_CASE("batched matrix values") {
  Tape<double> t;
  Var a = t.input(T::from({1, 2, 2}, {1, 2, 3, 4}));
  Var b = t.input(T::from({1, 2, 2}, {5, 6, 7, 8}));
  auto ab = t.val(bmm(t, a, b));
  CHECK(ab.data[0] == 19.0);
  CHECK(ab.data[1] == 22.0);
  CHECK(ab.data[2] == 43.0);
  CHECK(ab.data[3] == 50.0);
  // a b^T : row i of a dotted with row j of b
  auto abt = t.val(bmm_nt(t, a, b));
  CHECK(abt.data[0] == 17.0);
  CHECK(abt.data[1] == 23.0);
  auto gram = t.val(bmm_nt(t, a, a));
  CHECK(gram.data[0] == 5.0);
  CHECK(gram.data[1] == 11.0);
  CHECK(gram.data[3] == 25.0);

  Var w = t.input(T::from({2, 3}, {1, 0, 2, 0, 1, 3}));
  Var mp = matmul_param(t, a, w);
  CHECK(t.val(mp).shape == Shape{1, 2, 3});
  CHECK(t.val(mp).data[0] == 1.0);
  CHECK(t.val(mp).data[2] == 8.0);
  Var bias = t.input(T::from({3}, {10, 20, 30}));
  auto wb = t.val(add_bias_last(t, mp, bias));
  CHECK(wb.data[0] == 11.0);
  CHECK(wb.data[5] == 48.0);
}

TEST_CASE("graph helper values") {
  Tape<double> t;
  Var x = t.input(T::from({1, 2, 2}, {1, 2, 3, 4}));
  auto d = t.val(diag_part(t, x));
  CHECK(d.shape == Shape{1, 2});
  CHECK(d.data[0] == 1.0);
  CHECK(d.data[1] == 4.0);
  auto e = t.val(diag_embed(t, t.input(T::from({1, 2}, {5, 6}))));
  CHECK(e.data[0] == 5.0);
  CHECK(e.data[1] == 0.0);
  CHECK(e.data[3] == 6.0);
  auto rs = t.val(row_sum(t, x));
  CHECK(rs.data[0] == 3.0);
  CHECK(rs.data[1] == 7.0);
  Var v = t.input(T::from({1, 2}, {10, 100}));
  CHECK(t.val(scale_rows(t, x, v)).data[2] == 300.0);
  CHECK(t.val(scale_cols(t, x, v)).data[2] == 30.0);
  CHECK(t.val(add_eye(t, x)).data[0] == 2.0);
  CHECK(t.val(add_eye(t, x)).data[1] == 2.0);
}

TEST_CASE("core op gradients") {
  Rng rng(101);
  const Shape s{2, 3};
  T wa = rand_tensor(s, rng), wb = rand_tensor(s, rng);

  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Var y = add(t, mul(t, in[0], in[1]), sub(t, in[0], in[1]));
        y = add(t, y, divide(t, in[0], in[1]));
        return wsum(t, y, wa);
      },
      {rand_signed(s, rng, 0.3), rand_signed(s, rng, 0.5)});

  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Var y = scale(t, in[0], 1.7);
        y = add_const(t, y, 0.3);
        y = neg(t, y);
        return wsum(t, y, wb);
      },
      {rand_tensor(s, rng)});
}

TEST_CASE("unary op gradients") {
  Rng rng(102);
  const Shape s{2, 4};
  T w = rand_tensor(s, rng);

  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Var y = exp(t, in[0]);
        y = add(t, y, log(t, in[1]));
        y = add(t, y, sqrt(t, in[1]));
        y = add(t, y, reciprocal(t, in[1]));
        y = add(t, y, pow_const(t, in[1], 1.3));
        y = add(t, y, square(t, in[0]));
        return wsum(t, y, w);
      },
      {rand_tensor(s, rng), rand_tensor(s, rng, 0.5, 2.0)});

  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Var y = relu(t, in[0]);
        y = add(t, y, sigmoid(t, in[0]));
        y = add(t, y, clamp(t, in[0], -0.7, 0.7));
        return wsum(t, y, w);
      },
      {rand_signed(s, rng, 0.05)});  // keep clear of 0 and +/-0.7
}

TEST_CASE("reduction gradients") {
  Rng rng(103);
  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Var y = mul_bscalar(t, in[0], in[1]);
        return add(t, add(t, sum(t, y), mean(t, in[0])),
                   sum(t, sum_batch(t, y)));
      },
      {rand_tensor({3, 2, 2}, rng), rand_tensor({3}, rng)});
}

TEST_CASE("batched matrix gradients") {
  Rng rng(104);
  T w23 = rand_tensor({2, 2, 3}, rng);
  T w22 = rand_tensor({2, 2, 2}, rng);

  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        return wsum(t, bmm(t, in[0], in[1]), w23);
      },
      {rand_tensor({2, 2, 4}, rng), rand_tensor({2, 4, 3}, rng)});

  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        return wsum(t, bmm_nt(t, in[0], in[1]), w22);
      },
      {rand_tensor({2, 2, 3}, rng), rand_tensor({2, 2, 3}, rng)});

  // Gram product: both gradient paths flow into the same leaf.
  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        return wsum(t, bmm_nt(t, in[0], in[0]), w22);
      },
      {rand_tensor({2, 2, 3}, rng)});

  ParamStore<double> store;
  Rng prng(105);
  store.add("w", rand_tensor({4, 3}, prng));
  store.add("b", rand_tensor({3}, prng));
  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Var y = matmul_param(t, in[0], t.param(store, "w"));
        y = add_bias_last(t, y, t.param(store, "b"));
        return wsum(t, y, w23);
      },
      {rand_tensor({2, 2, 4}, rng)}, &store);
}

TEST_CASE("graph helper gradients") {
  Rng rng(106);
  T wnn = rand_tensor({2, 3, 3}, rng);
  T wn = rand_tensor({2, 3}, rng);
  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Var y = scale_rows(t, in[0], in[1]);
        y = scale_cols(t, y, in[1]);
        y = add_eye(t, y);
        Var z = add(t, wsum(t, diag_part(t, y), wn),
                    wsum(t, row_sum(t, y), wn));
        z = add(t, z, wsum(t, diag_embed(t, in[1]), wnn));
        return add(t, z, wsum(t, reshape(t, in[0], {2, 9, 1}),
                              wnn.reshaped({2, 9, 1})));
      },
      {rand_tensor({2, 3, 3}, rng), rand_tensor({2, 3}, rng)});
}

TEST_CASE("conv2d matches hand values") {
  Tape<double> t;
  Var x = t.input(T::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var w = t.input(T::full({1, 1, 3, 3}, 1.0));
  Var b = t.input(T::from({1}, {0.5}));
  auto y = t.val(conv2d(t, x, w, b));
  CHECK(y.shape == Shape{1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(y.data[i] == doctest::Approx(10.5));

  // centre-tap kernel acts as identity
  T ident = T::zeros({1, 1, 3, 3});
  ident.data[4] = 1.0;
  Var w2 = t.input(ident);
  Var b0 = t.input(T::zeros({1}));
  auto y2 = t.val(conv2d(t, x, w2, b0));
  for (int i = 0; i < 4; ++i) CHECK(y2.data[i] == doctest::Approx(i + 1.0));

  // 1x1 conv mixes channels only
  Var x2 = t.input(T::from({1, 2, 1, 2}, {1, 2, 10, 20}));
  Var w3 = t.input(T::from({1, 2, 1, 1}, {2, 3}));
  auto y3 = t.val(conv2d(t, x2, w3, b0));
  CHECK(y3.data[0] == 32.0);
  CHECK(y3.data[1] == 64.0);

  CHECK_THROWS_AS(conv2d(t, x, t.input(T({1, 2, 3, 3})), b0), ShapeError);
}

TEST_CASE("conv2d gradients") {
  Rng rng(107);
  ParamStore<double> store;
  Rng prng(108);
  store.add("w", rand_tensor({3, 2, 3, 3}, prng, -0.5, 0.5));
  store.add("b", rand_tensor({3}, prng));
  store.add("w1", rand_tensor({2, 3, 1, 1}, prng, -0.5, 0.5));
  store.add("b1", rand_tensor({2}, prng));
  T wout = rand_tensor({2, 2, 4, 4}, rng);
  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Var y = conv2d(t, in[0], t.param(store, "w"), t.param(store, "b"));
        y = conv2d(t, y, t.param(store, "w1"), t.param(store, "b1"));
        return wsum(t, y, wout);
      },
      {rand_tensor({2, 2, 4, 4}, rng)}, &store, 1e-6, 1e-5);
}

TEST_CASE("batch norm values and running stats") {
  ParamStore<double> store;
  store.add("g", T::from({1}, {2.0}));
  store.add("bt", T::from({1}, {1.0}));
  const int rm = store.add("rm", T::zeros({1}), false);
  const int rv = store.add("rv", T::full({1}, 1.0), false);

  Tape<double> t;
  Var x = t.input(T::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var y = batch_norm2d(t, x, t.param(store, "g"), t.param(store, "bt"),
                       store, rm, rv, /*use_batch_stats=*/true,
                       /*update_running=*/true);
  // mean 2.5, biased var 1.25
  const double inv = 1.0 / std::sqrt(1.25 + 1e-5);
  CHECK(t.val(y).data[0] == doctest::Approx(2.0 * (1 - 2.5) * inv + 1.0));
  CHECK(t.val(y).data[3] == doctest::Approx(2.0 * (4 - 2.5) * inv + 1.0));
  CHECK(store.value(rm).data[0] == doctest::Approx(0.25));
  CHECK(store.value(rv).data[0] == doctest::Approx(0.9 + 0.125));

  // eval mode uses the running statistics verbatim
  Tape<double> t2;
  Var x2 = t2.input(T::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var y2 = batch_norm2d(t2, x2, t2.param(store, "g"), t2.param(store, "bt"),
                        store, rm, rv, false, false);
  const double inv2 = 1.0 / std::sqrt(store.value(rv).data[0] + 1e-5);
  CHECK(t2.val(y2).data[0] ==
        doctest::Approx(2.0 * (1 - 0.25) * inv2 + 1.0));
}

TEST_CASE("batch norm gradients in both modes") {
  Rng rng(109);
  ParamStore<double> store;
  store.add("g", rand_tensor({3}, rng, 0.5, 1.5));
  store.add("bt", rand_tensor({3}, rng));
  const int rm = store.add("rm", rand_tensor({3}, rng), false);
  const int rv = store.add("rv", rand_tensor({3}, rng, 0.5, 1.5), false);
  T w = rand_tensor({2, 3, 2, 2}, rng);

  for (bool batch_stats : {true, false})
    check_grads(
        [&, batch_stats](Tape<double>& t, const std::vector<Var>& in) {
          Var y = batch_norm2d(t, in[0], t.param(store, "g"),
                               t.param(store, "bt"), store, rm, rv,
                               batch_stats, /*update_running=*/false);
          return wsum(t, y, w);
        },
        {rand_tensor({2, 3, 2, 2}, rng)}, &store, 2e-6, 1e-5);
}

TEST_CASE("max pool values and gradients") {
  Tape<double> t;
  Var x = t.input(T::from({1, 1, 2, 4}, {1, 5, 2, 0, 3, 2, 8, 4}));
  auto y = t.val(max_pool2(t, x));
  CHECK(y.shape == Shape{1, 1, 1, 2});
  CHECK(y.data[0] == 5.0);
  CHECK(y.data[1] == 8.0);
  CHECK_THROWS_AS(max_pool2(t, t.input(T({1, 1, 3, 3}))), ShapeError);

  Rng rng(110);
  T w = rand_tensor({1, 2, 2, 2}, rng);
  // distinct magnitudes so the argmax is stable under +/-h
  T xin({1, 2, 4, 4});
  for (std::int64_t i = 0; i < xin.size(); ++i)
    xin.data[i] = double((i * 7919) % 97) + 0.01 * double(i);
  check_grads(
      [&](Tape<double>& t2, const std::vector<Var>& in) {
        return wsum(t2, max_pool2(t2, in[0]), w);
      },
      {xin});
}

TEST_CASE("bilinear resize values") {
  Tape<double> t;
  Var x = t.input(T::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto y = t.val(bilinear_resize(t, x, 1, 1));
  CHECK(y.data[0] == doctest::Approx(2.5));

  Var row = t.input(T::from({1, 1, 1, 2}, {0, 4}));
  auto up = t.val(bilinear_resize(t, row, 1, 4));
  CHECK(up.data[0] == doctest::Approx(0.0));
  CHECK(up.data[1] == doctest::Approx(1.0));
  CHECK(up.data[2] == doctest::Approx(3.0));
  CHECK(up.data[3] == doctest::Approx(4.0));

  auto same = t.val(bilinear_resize(t, x, 2, 2));
  for (int i = 0; i < 4; ++i) CHECK(same.data[i] == doctest::Approx(i + 1.0));
}

TEST_CASE("bilinear resize gradients") {
  Rng rng(111);
  T wu = rand_tensor({1, 2, 5, 6}, rng);
  T wd = rand_tensor({1, 2, 2, 2}, rng);
  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        return add(t, wsum(t, bilinear_resize(t, in[0], 5, 6), wu),
                   wsum(t, bilinear_resize(t, in[0], 2, 2), wd));
      },
      {rand_tensor({1, 2, 3, 4}, rng)});
}

TEST_CASE("adaptive average pool values and gradients") {
  Tape<double> t;
  T xin({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) xin.data[i] = double(i);
  Var x = t.input(xin);
  auto y = t.val(adaptive_avg_pool(t, x, 2, 2));
  CHECK(y.data[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(y.data[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
  auto idy = t.val(adaptive_avg_pool(t, x, 4, 4));
  CHECK(idy.data[7] == 7.0);
  CHECK_THROWS_AS(adaptive_avg_pool(t, x, 8, 4), ValidationError);

  Rng rng(112);
  T w = rand_tensor({1, 2, 2, 3}, rng);
  check_grads(
      [&](Tape<double>& t2, const std::vector<Var>& in) {
        return wsum(t2, adaptive_avg_pool(t2, in[0], 2, 3), w);
      },
      {rand_tensor({1, 2, 5, 7}, rng)});
}

TEST_CASE("dropout semantics") {
  Tape<double> t;
  Var x = t.input(T::full({1, 1, 8, 8}, 1.0));
  Rng rng(113);
  Var off = dropout(t, x, 0.5, rng, /*active=*/false);
  CHECK(off.id == x.id);
  Var zero = dropout(t, x, 0.0, rng, true);
  CHECK(zero.id == x.id);
  CHECK_THROWS_AS(dropout(t, x, 1.0, rng, true), ValidationError);

  Var on = dropout(t, x, 0.5, rng, true);
  int zeros = 0;
  for (std::int64_t i = 0; i < 64; ++i) {
    const double v = t.val(on).data[i];
    CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    zeros += (v == 0.0);
  }
  CHECK(zeros > 10);
  CHECK(zeros < 54);

  // identical seed reproduces the mask
  Tape<double> t2;
  Rng rng2(113);
  Var x2 = t2.input(T::full({1, 1, 8, 8}, 1.0));
  Var off2 = dropout(t2, x2, 0.5, rng2, false);
  (void)off2;
  Var on2 = dropout(t2, x2, 0.5, rng2, true);
  for (std::int64_t i = 0; i < 64; ++i)
    CHECK(t2.val(on2).data[i] == t.val(on).data[i]);
}

TEST_CASE("dropout gradients with a pinned mask") {
  Rng rng(114);
  T w = rand_tensor({2, 1, 3, 3}, rng);
  check_grads(
      [&](Tape<double>& t, const std::vector<Var>& in) {
        Rng mask_rng(7);  // same mask for every rebuild
        return wsum(t, dropout(t, in[0], 0.4, mask_rng, true), w);
      },
      {rand_tensor({2, 1, 3, 3}, rng)});
}

TEST_CASE("concat and node/grid permutations") {
  Tape<double> t;
  Var a = t.input(T::from({1, 1, 1, 2}, {1, 2}));
  Var b = t.input(T::from({1, 2, 1, 2}, {3, 4, 5, 6}));
  auto c = t.val(concat_channels(t, a, b));
  CHECK(c.shape == Shape{1, 3, 1, 2});
  CHECK(c.data[0] == 1.0);
  CHECK(c.data[2] == 3.0);
  CHECK(c.data[5] == 6.0);
  CHECK_THROWS_AS(concat_channels(t, a, t.input(T({1, 1, 2, 2}))),
                  ShapeError);

  Var g = t.input(T::from({1, 2, 2, 2}, {0, 1, 2, 3, 10, 11, 12, 13}));
  auto n = t.val(grid_to_nodes(t, g));
  CHECK(n.shape == Shape{1, 4, 2});
  // node 1 = (y=0, x=1) -> channels (1, 11)
  CHECK(n.data[2] == 1.0);
  CHECK(n.data[3] == 11.0);
  Var back = nodes_to_grid(t, grid_to_nodes(t, g), 2, 2);
  for (std::int64_t i = 0; i < 8; ++i)
    CHECK(t.val(back).data[i] == t.val(g).data[i]);
  CHECK_THROWS_AS(nodes_to_grid(t, grid_to_nodes(t, g), 3, 2), ShapeError);

  Rng rng(115);
  T wc = rand_tensor({2, 3, 2, 2}, rng);
  T wn = rand_tensor({2, 4, 3}, rng);
  check_grads(
      [&](Tape<double>& t2, const std::vector<Var>& in) {
        Var cc = concat_channels(t2, in[0], in[1]);
        return add(t2, wsum(t2, cc, wc),
                   wsum(t2, grid_to_nodes(t2, cc), wn));
      },
      {rand_tensor({2, 1, 2, 2}, rng), rand_tensor({2, 2, 2, 2}, rng)});
  check_grads(
      [&](Tape<double>& t2, const std::vector<Var>& in) {
        return wsum(t2, nodes_to_grid(t2, in[0], 2, 2), wc.reshaped({2, 3, 2, 2}));
      },
      {rand_tensor({2, 4, 3}, rng)});
}
