#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "movietour/errors.hpp"
#include "movietour/ops.hpp"
#include "movietour/tape.hpp"
#include "oracles.hpp"

using namespace movietour;

TEST_CASE("backward on an empty tape or a non-scalar node is a usage error") {
  Tape<float> tape;
  auto x = tape.input(Tensor<float>({1}, 1.0f));
  CHECK_THROWS_AS(tape.backward(x), UsageError);

  auto w = tape.variable(Tensor<float>({2, 3}, 0.5f));
  auto b = tape.variable(Tensor<float>({3}, 0.0f));
  auto in = tape.input(Tensor<float>({1, 2}, 1.0f));
  auto y = tape.dense(in, w, b);
  CHECK_THROWS_AS(tape.backward(y), UsageError);
  CHECK_THROWS_AS(tape.backward(w), UsageError);
}

TEST_CASE("zero seed leaves every gradient exactly zero") {
  std::mt19937_64 rng(1);
  Tape<float> tape;
  auto w = tape.variable(oracle::random_tensor<float>({5, 4}, rng));
  auto b = tape.variable(oracle::random_tensor<float>({4}, rng));
  auto x = tape.input(oracle::random_tensor<float>({3, 5}, rng));
  std::vector<int> labels{0, 3, 1};
  auto xent = tape.softmax_xent(tape.dense(x, w, b), labels);
  tape.backward(xent.loss, 0.0f);
  for (float g : tape.grad(w)) CHECK(g == 0.0f);
  for (float g : tape.grad(b)) CHECK(g == 0.0f);
}

TEST_CASE("single dense layer gradient equals (probs - onehot)^T x / N") {
  std::mt19937_64 rng(2);
  auto xv = oracle::random_tensor<double>({4, 6}, rng);
  Tape<double> tape;
  auto w = tape.variable(oracle::random_tensor<double>({6, 5}, rng));
  auto b = tape.variable(oracle::random_tensor<double>({5}, rng));
  std::vector<int> labels{4, 0, 2, 2};
  auto xent = tape.softmax_xent(tape.dense(tape.input(xv), w, b), labels);
  tape.backward(xent.loss);

  const auto& probs = tape.value(xent.probs);
  for (std::size_t f = 0; f < 6; ++f) {
    for (std::size_t u = 0; u < 5; ++u) {
      double want = 0;
      for (std::size_t n = 0; n < 4; ++n) {
        want += (probs.at2(n, u) - (labels[n] == static_cast<int>(u) ? 1.0 : 0.0)) * xv.at2(n, f) / 4.0;
      }
      CHECK(tape.grad(w)[f * 5 + u] == doctest::Approx(want).epsilon(1e-12));
    }
  }
  for (std::size_t u = 0; u < 5; ++u) {
    double want = 0;
    for (std::size_t n = 0; n < 4; ++n) want += (probs.at2(n, u) - (labels[n] == static_cast<int>(u) ? 1.0 : 0.0)) / 4.0;
    CHECK(tape.grad(b)[u] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("gradients accumulate when a tensor feeds two operations") {
  // The same weight is used by two stacked dense layers.
  std::mt19937_64 rng(3);
  Tape<double> tape;
  Tensor<double> shared = oracle::random_tensor<double>({3, 3}, rng);
  auto w = tape.parameter(shared);
  auto zero_b = tape.input(Tensor<double>({3}, 0.0));
  auto x = tape.input(oracle::random_tensor<double>({2, 3}, rng));
  auto h = tape.dense(x, w, zero_b);
  auto y = tape.dense(h, w, zero_b);
  std::vector<int> labels{1, 2};
  auto xent = tape.softmax_xent(y, labels);
  tape.backward(xent.loss);

  // Manual chain rule over the two uses of W.
  const auto& xv = tape.value(x);
  const auto& hv = tape.value(h);
  auto gy = ops::softmax_xent_backward(tape.value(xent.probs), labels, 1.0);
  auto second = ops::dense_backward(hv, shared, gy);
  auto first = ops::dense_backward(xv, shared, second.input);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(shared.grad()[i] == doctest::Approx(first.weight[i] + second.weight[i]).epsilon(1e-12));
  }
}

TEST_CASE("doubling the seed doubles every leaf gradient exactly") {
  auto run = [](float seed) {
    std::mt19937_64 local(99);
    Tensor<float> w1 = oracle::random_tensor<float>({4, 2, 3, 3}, local);
    Tensor<float> b1 = oracle::random_tensor<float>({4}, local);
    Tensor<float> w2 = oracle::random_tensor<float>({4 * 2 * 2, 3}, local);
    Tensor<float> b2 = oracle::random_tensor<float>({3}, local);
    Tape<float> tape;
    auto x = tape.input(oracle::random_tensor<float>({2, 2, 4, 4}, local));
    auto h = tape.maxpool2(tape.relu(tape.conv2d(x, tape.parameter(w1), tape.parameter(b1), 1, 1)));
    auto y = tape.dense(tape.flatten(h), tape.parameter(w2), tape.parameter(b2));
    std::vector<int> labels{0, 2};
    tape.backward(tape.softmax_xent(y, labels).loss, seed);
    std::vector<float> all;
    for (auto* t : {&w1, &b1, &w2, &b2}) all.insert(all.end(), t->grad().begin(), t->grad().end());
    return all;
  };
  auto one = run(1.0f);
  auto two = run(2.0f);
  REQUIRE(one.size() == two.size());
  bool any_nonzero = false;
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(two[i] == 2.0f * one[i]);
    any_nonzero |= one[i] != 0.0f;
  }
  CHECK(any_nonzero);
}

TEST_CASE("tape records one entry per layer-level op") {
  Tape<float> tape;
  Tensor<float> w({1, 1, 3, 3}, 0.1f), b({1}, 0.0f);
  auto x = tape.input(Tensor<float>({1, 1, 4, 4}, 1.0f));
  auto y = tape.maxpool2(tape.relu(tape.conv2d(x, tape.parameter(w), tape.parameter(b), 1, 1)));
  tape.flatten(y);
  CHECK(tape.num_records() == 4);
  tape.clear();
  CHECK(tape.num_records() == 0);
  CHECK(tape.num_nodes() == 0);
}
