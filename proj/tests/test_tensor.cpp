#include <doctest.h>

#include <cmath>

#include "asc/ops.hpp"
#include "asc/tensor.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace asc;
using testutil::as_doubles;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("tensor basics and invariants") {
  Tensor<float> t = Tensor<float>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(Tensor<float>::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_FALSE(t.on_tape());
}

TEST_CASE("conv2d: zero input yields the bias everywhere") {
  Rng rng = make_rng(1);
  const Tensor<double> x = Tensor<double>::zeros({1, 1, 3, 3});
  const Tensor<double> k = random_tensor<double>(rng, {2, 1, 3, 3});
  const Tensor<double> b = Tensor<double>::from({2}, {0.25, -1.5});
  const Tensor<double> y = conv2d(x, k, b);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK((*y.data)[i] == doctest::Approx(0.25));
    CHECK((*y.data)[9 + i] == doctest::Approx(-1.5));
  }
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
  Rng rng = make_rng(2);
  const Tensor<double> x = random_tensor<double>(rng, {1, 1, 5, 4});
  Tensor<double> k = Tensor<double>::zeros({1, 1, 3, 3});
  (*k.data)[4] = 1.0;  // center tap
  const Tensor<double> y = conv2d(x, k, Tensor<double>::zeros({1}));
  CHECK(max_abs_diff(as_doubles(y), as_doubles(x)) == 0.0);
}

TEST_CASE("conv2d matches the naive-loop oracle") {
  Rng rng = make_rng(3);
  for (int iter = 0; iter < 25; ++iter) {
    const std::size_t c_in = 1 + static_cast<std::size_t>(uniform_int(rng, 0, 2));
    const std::size_t c_out = 1 + static_cast<std::size_t>(uniform_int(rng, 0, 2));
    const std::size_t h = 2 + static_cast<std::size_t>(uniform_int(rng, 0, 5));
    const std::size_t w = 2 + static_cast<std::size_t>(uniform_int(rng, 0, 5));
    const Tensor<double> x = random_tensor<double>(rng, {1, c_in, h, w});
    const Tensor<double> k = random_tensor<double>(rng, {c_out, c_in, 3, 3});
    const Tensor<double> b = random_tensor<double>(rng, {c_out});
    const Tensor<double> y = conv2d(x, k, b);
    const auto expect = oracle::conv2d(as_doubles(x), 1, c_in, h, w, as_doubles(k), c_out, 3, 3,
                                       as_doubles(b));
    CHECK(max_abs_diff(as_doubles(y), expect) < 1e-6);
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  const Tensor<float> x = Tensor<float>::zeros({1, 2, 3, 3});
  const Tensor<float> k = Tensor<float>::zeros({1, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(x, k, Tensor<float>::zeros({1})), ShapeError);
}

TEST_CASE("maxpool2d: window examples and tie handling") {
  const Tensor<double> x = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor<double> y = maxpool2d(x);
  CHECK(y.shape == Shape{1, 1, 1, 1});
  CHECK((*y.data)[0] == 4.0);

  // Constant input: output constant, gradient routed to the first cell of
  // each window.
  Tape<double> tape;
  Tensor<double> c = Tensor<double>::full({1, 1, 2, 4}, 3.0);
  tape.watch(c);
  Tensor<double> p = maxpool2d(c);
  Tensor<double> loss = sum_all(p);
  tape.backward(loss);
  const auto& g = tape.grad_view(c.node);
  CHECK(g == std::vector<double>{1, 0, 1, 0, 0, 0, 0, 0});
}

TEST_CASE("maxpool2d matches the nested-loop oracle and passes short axes through") {
  Rng rng = make_rng(4);
  const Tensor<double> x = random_tensor<double>(rng, {1, 2, 8, 8});
  const Tensor<double> y = maxpool2d(x);
  std::size_t oh = 0, ow = 0;
  const auto expect = oracle::maxpool2d(as_doubles(x), 1, 2, 8, 8, 2, &oh, &ow);
  CHECK(y.shape == Shape{1, 2, oh, ow});
  CHECK(max_abs_diff(as_doubles(y), expect) == 0.0);

  const Tensor<double> thin = random_tensor<double>(rng, {1, 1, 1, 6});
  const Tensor<double> tp = maxpool2d(thin);
  CHECK(tp.shape == Shape{1, 1, 1, 3});  // short time axis passes through

  const Tensor<double> tiny = random_tensor<double>(rng, {1, 1, 1, 1});
  CHECK(maxpool2d(tiny).shape == Shape{1, 1, 1, 1});
}

TEST_CASE("linear: identity and zero-weight examples") {
  const Tensor<double> x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> eye = Tensor<double>::zeros({3, 3});
  for (int i = 0; i < 3; ++i) (*eye.data)[static_cast<std::size_t>(i) * 4] = 1.0;
  const Tensor<double> y = linear(x, eye, Tensor<double>::zeros({3}));
  CHECK(max_abs_diff(as_doubles(y), as_doubles(x)) == 0.0);

  const Tensor<double> b = Tensor<double>::from({4}, {1, -2, 3, -4});
  const Tensor<double> z = linear(x, Tensor<double>::zeros({3, 4}), b);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 4; ++j) CHECK((*z.data)[r * 4 + j] == (*b.data)[j]);
  }
}

TEST_CASE("linear matches the naive matmul oracle") {
  Rng rng = make_rng(5);
  for (int iter = 0; iter < 25; ++iter) {
    const std::size_t rows = 1 + static_cast<std::size_t>(uniform_int(rng, 0, 4));
    const std::size_t d_in = 1 + static_cast<std::size_t>(uniform_int(rng, 0, 5));
    const std::size_t d_out = 1 + static_cast<std::size_t>(uniform_int(rng, 0, 5));
    const Tensor<double> x = random_tensor<double>(rng, {rows, d_in});
    const Tensor<double> w = random_tensor<double>(rng, {d_in, d_out});
    const Tensor<double> b = random_tensor<double>(rng, {d_out});
    const auto expect = oracle::linear(as_doubles(x), rows, d_in, as_doubles(w), d_out, as_doubles(b));
    CHECK(max_abs_diff(as_doubles(linear(x, w, b)), expect) < 1e-9);
  }
  CHECK_THROWS_AS(linear(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({4, 2}),
                         Tensor<double>::zeros({2})),
                  ShapeError);
}

TEST_CASE("relu examples") {
  const Tensor<double> x = Tensor<double>::from({3}, {-1, 0, 2});
  CHECK(as_doubles(relu(x)) == std::vector<double>{0, 0, 2});
  const Tensor<double> neg = Tensor<double>::from({3}, {-5, -0.5, -1e-9});
  CHECK(as_doubles(relu(neg)) == std::vector<double>{0, 0, 0});
}

TEST_CASE("softmax: examples, shift invariance, probability vector") {
  const Tensor<double> x = Tensor<double>::from({2}, {0, 0});
  CHECK(as_doubles(softmax(x, 0)) == std::vector<double>{0.5, 0.5});

  Rng rng = make_rng(6);
  for (int iter = 0; iter < 20; ++iter) {
    const Tensor<double> logits = random_tensor<double>(rng, {7}, -4.0, 4.0);
    const double c = uniform<double>(rng, -10.0, 10.0);
    Tensor<double> shifted = logits.detached();
    for (auto& v : *shifted.data) v += c;
    const auto a = as_doubles(softmax(logits, 0));
    const auto b = as_doubles(softmax(shifted, 0));
    CHECK(max_abs_diff(a, b) < 1e-12);
    double sum = 0.0;
    for (double v : a) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
    CHECK(max_abs_diff(a, oracle::softmax(as_doubles(logits))) < 1e-12);
  }
}

TEST_CASE("softmax along a middle axis") {
  Rng rng = make_rng(7);
  const Tensor<double> x = random_tensor<double>(rng, {2, 3, 2});
  const Tensor<double> y = softmax(x, 1);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t in = 0; in < 2; ++in) {
      double sum = 0.0;
      for (std::size_t l = 0; l < 3; ++l) sum += (*y.data)[(o * 3 + l) * 2 + in];
      CHECK(sum == doctest::Approx(1.0));
    }
}

TEST_CASE("layernorm: constant vector, two-point standardization, moments") {
  const Tensor<double> c = Tensor<double>::full({4}, 2.5);
  const Tensor<double> yc = layernorm(c, Tensor<double>::full({4}, 1.0), Tensor<double>::zeros({4}));
  for (double v : *yc.data) CHECK(std::abs(v) < 1e-9);  // variance floor via eps

  const Tensor<double> two = Tensor<double>::from({2}, {1, 3});
  const Tensor<double> y2 = layernorm(two, Tensor<double>::full({2}, 1.0), Tensor<double>::zeros({2}));
  CHECK((*y2.data)[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK((*y2.data)[1] == doctest::Approx(1.0).epsilon(1e-4));

  Rng rng = make_rng(8);
  const std::size_t d = 16;
  const Tensor<double> x = random_tensor<double>(rng, {d}, -3.0, 3.0);
  const Tensor<double> y = layernorm(x, Tensor<double>::full({d}, 1.0), Tensor<double>::zeros({d}));
  double mean = 0.0, var = 0.0;
  for (double v : *y.data) mean += v;
  mean /= static_cast<double>(d);
  for (double v : *y.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1.0) < 1e-3);

  CHECK(max_abs_diff(as_doubles(y),
                     oracle::layernorm(as_doubles(x), 1, d, std::vector<double>(d, 1.0),
                                       std::vector<double>(d, 0.0))) < 1e-12);
}

TEST_CASE("dropout: identity cases, kept fraction, rate validation") {
  Rng rng = make_rng(9);
  const Tensor<float> x = random_tensor<float>(rng, {50});

  Rng r0 = make_rng(1);
  CHECK(as_doubles(dropout(x, 0.0f, true, r0)) == as_doubles(x));
  CHECK(as_doubles(dropout(x, 0.9f, false, r0)) == as_doubles(x));
  CHECK_THROWS_AS(dropout(x, 1.0f, true, r0), UsageError);
  CHECK_THROWS_AS(dropout(x, -0.1f, true, r0), UsageError);

  const Tensor<float> big = Tensor<float>::full({100000}, 1.0f);
  Rng r1 = make_rng(123);
  const Tensor<float> dropped = dropout(big, 0.5f, true, r1);
  std::size_t kept = 0;
  for (float v : *dropped.data) {
    if (v != 0.0f) {
      CHECK(v == doctest::Approx(2.0f));  // inverted scaling
      ++kept;
    }
  }
  const double frac = static_cast<double>(kept) / 100000.0;
  CHECK(frac > 0.49);
  CHECK(frac < 0.51);
}

TEST_CASE("backward: gradient of sum and of half squared norm") {
  Tape<double> tape;
  Tensor<double> w = Tensor<double>::from({4}, {0.5, -1.5, 2.0, 0.25});
  tape.watch(w);
  Tensor<double> loss = sum_all(w);
  tape.backward(loss);
  CHECK(tape.grad_view(w.node) == std::vector<double>{1, 1, 1, 1});

  Tape<double> tape2;
  Tensor<double> w2 = Tensor<double>::from({4}, {0.5, -1.5, 2.0, 0.25});
  tape2.watch(w2);
  const Tensor<double> row = reshape(w2, {1, 4});
  const Tensor<double> sq = matmul_nt(row, row);  // [1,1] = sum w^2
  const Tensor<double> half = scale(reshape(sq, {1}), 0.5);
  tape2.backward(reshape(half, Shape{}));
  const auto& g = tape2.grad_view(w2.node);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx((*w2.data)[i]));
}

TEST_CASE("backward: loss must be a scalar on this tape") {
  Tape<double> tape;
  Tensor<double> w = Tensor<double>::from({2}, {1, 2});
  tape.watch(w);
  CHECK_THROWS_AS(tape.backward(w), ShapeError);
  const Tensor<double> frozen = Tensor<double>::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(frozen), UsageError);
}

TEST_CASE("tape replay is deterministic: bitwise-identical gradients") {
  Rng rng = make_rng(10);
  Tape<double> tape;
  Tensor<double> a = random_tensor<double>(rng, {5, 6});
  Tensor<double> b = random_tensor<double>(rng, {6, 3});
  tape.watch(a);
  tape.watch(b);
  const Tensor<double> y = relu(matmul(a, b));
  const Tensor<double> loss = sum_all(y);
  tape.backward(loss);
  const std::vector<double> ga1 = tape.grad_view(a.node);
  const std::vector<double> gb1 = tape.grad_view(b.node);
  tape.backward(loss);
  CHECK(tape.grad_view(a.node) == ga1);
  CHECK(tape.grad_view(b.node) == gb1);
}

TEST_CASE("ops surface non-finite values instead of propagating them") {
  const Tensor<float> huge = Tensor<float>::full({4}, 3e38f);
  CHECK_THROWS_AS(scale(huge, 10.0f), NumericError);
  const Tensor<float> big = Tensor<float>::full({2, 1}, 2e38f);
  CHECK_THROWS_AS(matmul_nt(big, big), NumericError);
}

TEST_CASE("mixing tapes in one op is rejected") {
  Tape<double> t1, t2;
  Tensor<double> a = Tensor<double>::from({2}, {1, 2});
  Tensor<double> b = Tensor<double>::from({2}, {3, 4});
  t1.watch(a);
  t2.watch(b);
  CHECK_THROWS_AS(add(a, b), UsageError);
}

TEST_CASE("reshape, slice_cols, concat, chw_to_time_major round trips") {
  Rng rng = make_rng(11);
  const Tensor<double> x = random_tensor<double>(rng, {3, 4});
  const Tensor<double> r = reshape(x, {4, 3});
  CHECK(r.shape == Shape{4, 3});
  CHECK_THROWS_AS(reshape(x, {5, 2}), ShapeError);

  const Tensor<double> left = slice_cols(x, 0, 2);
  const Tensor<double> right = slice_cols(x, 2, 4);
  const Tensor<double> back = concat_cols<double>({left, right});
  CHECK(as_doubles(back) == as_doubles(x));

  const Tensor<double> img = random_tensor<double>(rng, {1, 2, 3, 4});
  const Tensor<double> tm = chw_to_time_major(img);
  CHECK(tm.shape == Shape{3, 8});
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK((*tm.data)[i * 8 + ch * 4 + j] == (*img.data)[(ch * 3 + i) * 4 + j]);
      }
}

TEST_CASE("per-op gradient checks (64-bit, central differences)") {
  Rng rng = make_rng(12);

  SUBCASE("conv2d") {
    Tensor<double> x = random_tensor<double>(rng, {1, 2, 4, 5});
    Tensor<double> k = random_tensor<double>(rng, {3, 2, 3, 3});
    Tensor<double> b = random_tensor<double>(rng, {3});
    auto report = gradcheck::check({&x, &k, &b}, [&] { return sum_all(relu(conv2d(x, k, b))); });
    CHECK(report.pass);
  }
  SUBCASE("maxpool2d") {
    Tensor<double> x = random_tensor<double>(rng, {1, 2, 6, 6});
    auto report = gradcheck::check({&x}, [&] { return sum_all(tanh_op(maxpool2d(x))); });
    CHECK(report.pass);
  }
  SUBCASE("linear") {
    Tensor<double> x = random_tensor<double>(rng, {3, 4});
    Tensor<double> w = random_tensor<double>(rng, {4, 2});
    Tensor<double> b = random_tensor<double>(rng, {2});
    auto report = gradcheck::check({&x, &w, &b}, [&] { return sum_all(tanh_op(linear(x, w, b))); });
    CHECK(report.pass);
  }
  SUBCASE("softmax") {
    Tensor<double> x = random_tensor<double>(rng, {3, 5});
    Tensor<double> m = random_tensor<double>(rng, {3, 5});
    auto report = gradcheck::check({&x}, [&] {
      // Weighted sum so the gradient is not the trivial zero of sum(softmax).
      const Tensor<double> y = softmax(x, 1);
      return reshape(scale(matmul_nt(reshape(y, {1, 15}), reshape(m.detached(), {1, 15})), 1.0),
                     Shape{});
    });
    CHECK(report.pass);
  }
  SUBCASE("layernorm") {
    Tensor<double> x = random_tensor<double>(rng, {4, 6});
    Tensor<double> g = random_tensor<double>(rng, {6}, 0.5, 1.5);
    Tensor<double> s = random_tensor<double>(rng, {6});
    auto report = gradcheck::check({&x, &g, &s}, [&] { return sum_all(tanh_op(layernorm(x, g, s))); });
    CHECK(report.pass);
  }
  SUBCASE("dropout with a fixed mask seed") {
    Tensor<double> x = random_tensor<double>(rng, {40});
    auto report = gradcheck::check({&x}, [&] {
      Rng drop_rng = make_rng(99);
      return sum_all(tanh_op(dropout(x, 0.3, true, drop_rng)));
    });
    CHECK(report.pass);
  }
  SUBCASE("slice, concat, reshape, chw, scale, add") {
    Tensor<double> x = random_tensor<double>(rng, {1, 2, 3, 4});
    auto report = gradcheck::check({&x}, [&] {
      const Tensor<double> tm = chw_to_time_major(x);          // [3, 8]
      const Tensor<double> a = slice_cols(tm, 0, 3);
      const Tensor<double> b = slice_cols(tm, 3, 8);
      const Tensor<double> cat = concat_cols<double>({b, a});  // [3, 8]
      const Tensor<double> mixed = add(scale(cat, 0.7), tanh_op(tm));
      return sum_all(tanh_op(reshape(mixed, {24})));
    });
    CHECK(report.pass);
  }
}
