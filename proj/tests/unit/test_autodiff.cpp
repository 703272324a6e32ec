#include <doctest.h>

#include "../common/checks.hpp"
#include "ivg/errors.hpp"

using namespace ivg;
using namespace ivg::testing;

namespace {

constexpr double kTol = 1e-6;

// sum(op(inputs) o R) for a fixed random R, so every output entry matters.
template <typename Op>
double check_op(std::vector<Matrix> inputs, Op op, std::uint64_t seed = 1) {
  Rng rng(seed);
  Matrix weights;
  std::vector<Matrix*> targets;
  for (auto& m : inputs) targets.push_back(&m);
  auto build = [&](ad::Tape& t) {
    std::vector<ad::Var> leaves;
    for (auto* m : targets) leaves.push_back(t.input(*m));
    ad::Var out = op(leaves);
    if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), rng);
    return std::pair{ad::sum(ad::hadamard(out, t.constant(weights))), leaves};
  };
  return gradient_check(targets, build).max_rel_error;
}

}  // namespace

TEST_CASE("elementwise and linear-algebra gradients") {
  Rng rng(3);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng), c = random_matrix(4, 2, rng);
  CHECK(check_op({a, c}, [](auto& v) { return ad::matmul(v[0], v[1]); }) < kTol);
  CHECK(check_op({a, b}, [](auto& v) { return ad::matmul_nt(v[0], v[1]); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::transpose(v[0]); }) < kTol);
  CHECK(check_op({a, b}, [](auto& v) { return ad::add(v[0], v[1]); }) < kTol);
  CHECK(check_op({a, b}, [](auto& v) { return ad::sub(v[0], v[1]); }) < kTol);
  CHECK(check_op({a, b}, [](auto& v) { return ad::hadamard(v[0], v[1]); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::scale(v[0], -2.5); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::relu(v[0]); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::softplus(v[0]); }) < kTol);
}

TEST_CASE("broadcast and shape gradients") {
  Rng rng(4);
  const Matrix a = random_matrix(3, 4, rng), r = random_matrix(1, 4, rng), col = random_matrix(3, 1, rng);
  CHECK(check_op({a, r}, [](auto& v) { return ad::add_row(v[0], v[1]); }) < kTol);
  CHECK(check_op({a, col}, [](auto& v) { return ad::add_col(v[0], v[1]); }) < kTol);
  CHECK(check_op({a, r}, [](auto& v) { return ad::mul_row(v[0], v[1]); }) < kTol);
  CHECK(check_op({r}, [](auto& v) { return ad::repeat_rows(v[0], 5); }) < kTol);
  CHECK(check_op({a, a}, [](auto& v) {
          const std::array<ad::Var, 2> parts{v[0], v[1]};
          return ad::concat_cols(parts);
        }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::slice_cols(v[0], 1, 2); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::row(v[0], 2); }) < kTol);
  CHECK(check_op({a}, [](auto& v) {
          const std::array<int, 4> idx{2, 0, 2, 1};
          return ad::gather_rows(v[0], idx);
        }) < kTol);
}

TEST_CASE("reduction gradients") {
  Rng rng(5);
  const Matrix a = random_matrix(4, 3, rng), r = random_matrix(1, 5, rng);
  CHECK(check_op({a}, [](auto& v) { return ad::sum(v[0]); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::mean_rows(v[0]); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::max_rows(v[0]); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::max_rows(v[0], {true, false, true, true}); }) < kTol);
  CHECK(check_op({r}, [](auto& v) { return ad::masked_mean(v[0], {true, false, true, true, false}); }) < kTol);
}

TEST_CASE("network primitive gradients") {
  Rng rng(6);
  const Matrix a = random_matrix(5, 4, rng), gain = random_matrix(1, 4, rng), bias = random_matrix(1, 4, rng);
  const Matrix kernel = random_matrix(3, 4, rng);
  CHECK(check_op({a}, [](auto& v) { return ad::softmax_rows(v[0]); }) < kTol);
  CHECK(check_op({a}, [](auto& v) { return ad::softmax_rows(v[0], {true, false, true, true}); }) < kTol);
  CHECK(check_op({a, gain, bias}, [](auto& v) { return ad::layer_norm_rows(v[0], v[1], v[2]); }) < kTol);
  CHECK(check_op({a, kernel, bias}, [](auto& v) { return ad::depthwise_conv1d(v[0], v[1], v[2]); }) < kTol);
  Matrix p(1, 4);
  p << 0.1, 0.2, 0.3, 0.4;
  CHECK(check_op({p}, [](auto& v) { return ad::neg_log_pick(v[0], 2, 1e-12); }) < kTol);
}

TEST_CASE("softmax rows sum to one and masked columns are zero") {
  ad::Tape t;
  Matrix a(2, 3);
  a << 1, 2, 3, -1, 0, 50;
  const auto s = ad::softmax_rows(t.constant(a), {true, false, true}).value();
  CHECK(s(0, 1) == 0.0);
  CHECK(s.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.row(1).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(ad::softmax_rows(t.constant(a), {false, false, false}), ConfigError);
}

TEST_CASE("max_rows pools columns") {
  ad::Tape t;
  Matrix q(2, 2);
  q << 1, 5, 3, 2;
  const Matrix m = ad::max_rows(t.constant(q)).value();
  CHECK(m(0, 0) == 3.0);
  CHECK(m(0, 1) == 5.0);
}

TEST_CASE("depthwise convolution matches a direct sum with zero padding") {
  Rng rng(8);
  const Matrix x = random_matrix(6, 2, rng), k = random_matrix(3, 2, rng), b = random_matrix(1, 2, rng);
  ad::Tape t;
  const Matrix y = ad::depthwise_conv1d(t.constant(x), t.constant(k), t.constant(b)).value();
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 2; ++c) {
      double s = b(0, c);
      for (int j = 0; j < 3; ++j) {
        const int src = i + j - 1;
        if (src >= 0 && src < 6) s += k(j, c) * x(src, c);
      }
      CHECK(y(i, c) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("shared parameter slots accumulate gradients") {
  Matrix w(1, 1);
  w << 3.0;
  ad::Tape t;
  const auto p1 = t.param(w, 0);
  const auto p2 = t.param(w, 0);
  CHECK(p1.id == p2.id);
  const auto loss = ad::sum(ad::hadamard(p1, p2));  // w^2
  t.backward(loss);
  std::vector<Matrix> grads{Matrix::Zero(1, 1)};
  t.flush_param_grads(grads);
  CHECK(grads[0](0, 0) == doctest::Approx(6.0));
}

TEST_CASE("a non-recording tape leaves parameters without gradients") {
  Matrix w = Matrix::Ones(2, 2);
  ad::Tape t(false);
  const auto p = t.param(w, 0);
  CHECK(!t.requires_grad(p.id));
}
