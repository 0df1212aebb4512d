#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "sec/error.hpp"
#include "sec/policy.hpp"
#include "support.hpp"

using namespace sec;
using testing::random_matrix;

namespace {

PolicyShape small_shape(HeadKind head, std::size_t levels = 3) {
  PolicyShape s;
  s.state_dim = 5;
  s.hidden = 6;
  s.predictor_hidden = 4;
  s.action_dim = 3;
  s.classes = 4;
  s.head = head;
  s.levels = levels;
  return s;
}

// Straight-line reference forward pass.
Matrix dense(const DenseLayer& l, const Matrix& x, bool relu) {
  Matrix y(x.rows(), l.out_dim());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < l.out_dim(); ++j) {
      double s = l.bias(0, j);
      for (std::size_t k = 0; k < l.in_dim(); ++k) s += x(i, k) * l.weight(k, j);
      y(i, j) = relu ? std::max(0.0, s) : s;
    }
  return y;
}

Matrix naive_output(const PolicyParams& p, Level level, const Matrix& states) {
  Matrix h = states;
  for (const auto& l : p.encoder.layers) h = dense(l, h, true);
  const auto& pred = p.predictors[level.index()];
  for (std::size_t i = 0; i < pred.layers.size(); ++i) h = dense(pred.layers[i], h, i + 1 < pred.layers.size());
  if (pred.head == HeadKind::kDiscrete) {
    for (std::size_t r = 0; r < h.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < h.cols(); ++c) total += std::exp(h(r, c));
      for (std::size_t c = 0; c < h.cols(); ++c) h(r, c) = std::exp(h(r, c)) / total;
    }
  }
  return h;
}

PolicyParams as_params(const PolicyGradients& g) { return PolicyParams{g.encoder, g.predictors}; }

}  // namespace

TEST_CASE("forward matches a straight-line reference for both heads") {
  Engine rng = make_engine(1);
  for (HeadKind head : {HeadKind::kContinuous, HeadKind::kDiscrete}) {
    const PolicyParams p = init_policy(small_shape(head), 7);
    const Matrix s = random_matrix(9, 5, rng);
    for (int level = 1; level <= 3; ++level) {
      const PolicyForward f = forward(p, Level{level}, s);
      CHECK(testing::max_abs_diff(f.output, naive_output(p, Level{level}, s)) < 1e-12);
    }
  }
}

TEST_CASE("all levels share one encoder") {
  Engine rng = make_engine(2);
  const PolicyParams p = init_policy(small_shape(HeadKind::kContinuous), 3);
  const Matrix s = random_matrix(4, 5, rng);
  const Matrix h1 = forward(p, Level{1}, s).hidden;
  CHECK(forward(p, Level{2}, s).hidden == h1);
  CHECK(forward(p, Level{3}, s).hidden == h1);
  CHECK(encode(p.encoder, s) == h1);
}

TEST_CASE("glorot initialisation stays in bounds with zero biases") {
  const PolicyParams p = init_policy(small_shape(HeadKind::kContinuous), 11);
  auto check_layer = [](const DenseLayer& l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
    for (double w : l.weight.values()) CHECK(std::abs(w) <= bound);
    for (double b : l.bias.values()) CHECK(b == 0.0);
  };
  for (const auto& l : p.encoder.layers) check_layer(l);
  for (const auto& pr : p.predictors)
    for (const auto& l : pr.layers) check_layer(l);
  CHECK(init_policy(small_shape(HeadKind::kContinuous), 11) == p);
  CHECK_FALSE(init_policy(small_shape(HeadKind::kContinuous), 12) == p);
}

TEST_CASE("backward matches central differences for every parameter") {
  Engine rng = make_engine(5);
  for (HeadKind head : {HeadKind::kContinuous, HeadKind::kDiscrete}) {
    PolicyParams p = init_policy(small_shape(head), 21);
    // Nonzero biases keep every pre-activation away from the ReLU kink at 0.
    for (Matrix* t : parameter_tensors(p))
      if (t->rows() == 1)
        for (double& b : t->values()) b = 0.3 * standard_normal(rng);
    const Matrix s = random_matrix(6, 5, rng);
    const Level level{2};
    const Matrix w = random_matrix(6, head == HeadKind::kContinuous ? 3 : 4, rng);
    // Loss is linear in the head output (logits for the discrete head).
    auto loss = [&] {
      const PolicyForward f = forward(p, level, s);
      const Matrix& out = head == HeadKind::kContinuous ? f.output : f.logits;
      double acc = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += out.values()[i] * w.values()[i];
      return acc;
    };
    const PolicyGradients g = backward(p, forward(p, level, s), w);
    CHECK(g.touched == std::vector<bool>{false, true, false});
    PolicyParams gp = as_params(g);
    auto params = parameter_tensors(p);
    auto grads = parameter_tensors(gp);
    REQUIRE(params.size() == grads.size());
    for (std::size_t t = 0; t < params.size(); ++t) {
      const Matrix fd = testing::numeric_gradient(*params[t], loss);
      INFO("head ", static_cast<int>(head), " tensor ", t);
      CHECK(testing::max_abs_diff(fd, *grads[t]) < 1e-6);
    }
  }
}

TEST_CASE("backward requires a cached forward pass") {
  const PolicyParams p = init_policy(small_shape(HeadKind::kContinuous), 1);
  CHECK_THROWS_AS(backward(p, PolicyForward{}, Matrix(1, 3)), ContractError);
}

TEST_CASE("softmax is stable and its backward matches differences") {
  const Matrix big = Matrix::from_rows({{1000.0, 1000.0, 999.0}});
  const Matrix p = softmax_rows(big);
  CHECK(p.all_finite());
  CHECK(p(0, 0) + p(0, 1) + p(0, 2) == doctest::Approx(1.0));
  Engine rng = make_engine(4);
  Matrix logits = random_matrix(3, 4, rng);
  const Matrix w = random_matrix(3, 4, rng);
  auto f = [&] {
    const Matrix q = softmax_rows(logits);
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += q.values()[i] * w.values()[i];
    return acc;
  };
  const Matrix analytic = softmax_backward(softmax_rows(logits), w);
  CHECK(testing::max_abs_diff(analytic, testing::numeric_gradient(logits, f)) < 1e-8);
}

TEST_CASE("checkpoint round-trips byte for byte") {
  const PolicyParams p = init_policy(small_shape(HeadKind::kDiscrete, 2), 8);
  const std::string text = policy_to_json(p);
  const PolicyParams q = policy_from_json(text);
  CHECK(q == p);
  CHECK(policy_to_json(q) == text);
  const auto path = (std::filesystem::temp_directory_path() / "sec_policy_roundtrip.json").string();
  save_policy(p, path);
  CHECK(load_policy(path) == p);
  std::filesystem::remove(path);
}

TEST_CASE("malformed checkpoints are data errors") {
  CHECK_THROWS_AS(policy_from_json("{\"format\":\"other\"}"), DataError);
  CHECK_THROWS_AS(policy_from_json("not json"), DataError);
}

TEST_CASE("parameter count matches the layer shapes") {
  const PolicyParams p = init_policy(small_shape(HeadKind::kContinuous), 1);
  // encoder 5->6->6, predictors 6->4->3, three levels
  const std::size_t enc = 5 * 6 + 6 + 6 * 6 + 6;
  const std::size_t pred = 6 * 4 + 4 + 4 * 3 + 3;
  CHECK(parameter_count(p) == enc + 3 * pred);
}
