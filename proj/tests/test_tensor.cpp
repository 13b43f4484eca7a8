#include <cmath>

#include "doctest.h"
#include "scgseg/ops_core.hpp"
#include "scgseg/params.hpp"
#include "scgseg/rng.hpp"
#include "scgseg/tensor.hpp"

using namespace scgseg;

TEST_CASE("tensor layout is row-major with the last index fastest") {
  Tensor<double> t({2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK(t.rank() == 4);
  t.at(1, 2, 3, 4) = 7.0;
  CHECK(t.data[((1 * 3 + 2) * 4 + 3) * 5 + 4] == 7.0);
  t.at(0, 0, 0, 1) = 3.0;
  CHECK(t.data[1] == 3.0);
}

TEST_CASE("matrix views alias the underlying storage") {
  Tensor<double> t({2, 2, 3});
  for (std::int64_t i = 0; i < t.size(); ++i) t.data[i] = double(i);
  auto m = t.slice_matrix(1, 2, 3);
  CHECK(m(0, 0) == 6.0);
  CHECK(m(1, 2) == 11.0);
  m(0, 1) = -1.0;
  CHECK(t.at(1, 0, 1) == -1.0);
  CHECK_THROWS_AS(t.matrix(5, 5), ShapeError);
}

TEST_CASE("reshape preserves data and validates element count") {
  Tensor<double> t({2, 3});
  for (std::int64_t i = 0; i < 6; ++i) t.data[i] = double(i);
  auto r = t.reshaped({3, 2});
  CHECK(r.at(2, 1) == 5.0);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("rng streams are deterministic and seed-separated") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 10; ++i) differs |= (a2.uniform() != c.uniform());
  CHECK(differs);
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
}

TEST_CASE("normal samples have roughly unit moments") {
  Rng rng(7);
  const int n = 20000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("param store rejects duplicates and counts trainable scalars") {
  ParamStore<double> store;
  store.add("w", Tensor<double>({2, 3}));
  store.add("running", Tensor<double>({4}), /*trainable=*/false);
  CHECK_THROWS_AS(store.add("w", Tensor<double>({1})), ValidationError);
  CHECK(store.trainable_count() == 6);
  CHECK(store.contains("running"));
  CHECK_FALSE(store.contains("nope"));
}

TEST_CASE("kaiming init matches its target scale") {
  Rng rng(11);
  auto w = kaiming_normal<double>({64, 64}, 64, rng);
  double s2 = 0;
  for (std::int64_t i = 0; i < w.size(); ++i) s2 += w.data[i] * w.data[i];
  const double std_obs = std::sqrt(s2 / double(w.size()));
  CHECK(std_obs == doctest::Approx(std::sqrt(2.0 / 64.0)).epsilon(0.08));
}

TEST_CASE("tape backpropagates a small graph and flushes param grads") {
  ParamStore<double> store;
  store.add("p", Tensor<double>::full({1}, 3.0));
  Tape<double> t;
  Var a = t.input(Tensor<double>::full({1}, 2.0));
  Var p = t.param(store, "p");
  // f = (a + p) * a = a^2 + a p ; df/da = 2a + p = 7, df/dp = a = 2
  Var f = mul(t, add(t, a, p), a);
  t.backward(f);
  CHECK(t.grad(a).data[0] == doctest::Approx(7.0));
  CHECK(store.grad(store.id("p")).data[0] == doctest::Approx(2.0));

  Tape<double> t2;
  Var v = t2.input(Tensor<double>({2, 2}));
  CHECK_THROWS_AS(t2.backward(v), ValidationError);
}
