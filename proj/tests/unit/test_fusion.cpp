#include <doctest.h>

#include "../common/checks.hpp"
#include "ivg/errors.hpp"
#include "ivg/fusion.hpp"

using namespace ivg;
using namespace ivg::testing;

namespace {

struct Fixture {
  ParamStore store;
  FusionParams p;
  explicit Fixture(int d, std::uint64_t seed = 1) {
    p = add_fusion_params(store, d);
    store.initialize(seed);
  }
  // FFN that copies block k of the 4d input (0 = V, 1 = A, 2 = V o A, 3 = V o B).
  void select_block(int k, int d) {
    store.value(p.ffn) = Matrix::Zero(4 * d, d);
    store.value(p.ffn).block(k * d, 0, d, d) = Matrix::Identity(d, d);
    store.value(p.ffn_bias).setZero();
  }
};

Matrix softmax_rows(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) z += std::exp(s(i, j) - m);
    for (Eigen::Index j = 0; j < s.cols(); ++j) out(i, j) = std::exp(s(i, j) - m) / z;
  }
  return out;
}

// Direct evaluation of the fusion formulas with explicit loops.
Matrix oracle(const Matrix& v, const Matrix& q, const ParamStore& st, const FusionParams& p) {
  const Eigen::Index t = v.rows(), n = q.rows(), d = v.cols();
  Matrix s(t, n);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < d; ++k)
        acc += st.value(p.w_video)(k, 0) * v(i, k) + st.value(p.w_query)(k, 0) * q(j, k) +
               st.value(p.w_joint)(0, k) * v(i, k) * q(j, k);
      s(i, j) = acc;
    }
  const Matrix sr = softmax_rows(s);
  const Matrix sc = softmax_rows(s.transpose()).transpose();
  const Matrix a = sr * q;
  const Matrix b = sr * sc.transpose() * v;
  Matrix cat(t, 4 * d);
  cat << v, a, v.cwiseProduct(a), v.cwiseProduct(b);
  Matrix x = cat * st.value(p.ffn);
  x.rowwise() += st.value(p.ffn_bias).row(0);
  return x;
}

ContextualizedFeatures feats(const Matrix& v, const Matrix& q) {
  ContextualizedFeatures f;
  f.v_prime = v;
  f.q_prime = q;
  return f;
}

}  // namespace

TEST_CASE("fusion matches the formula evaluated by hand") {
  Fixture fx(4);
  Rng rng(2);
  const Matrix v = random_matrix(5, 4, rng), q = random_matrix(3, 4, rng);
  const Matrix x = cqa_fuse(feats(v, q), fx.store, fx.p);
  CHECK(x.rows() == 5);
  CHECK(x.cols() == 4);
  CHECK((x - oracle(v, q, fx.store, fx.p)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single query token: every A row is that token") {
  Fixture fx(3);
  fx.select_block(1, 3);
  Rng rng(3);
  const Matrix v = random_matrix(4, 3, rng), q = random_matrix(1, 3, rng);
  const Matrix a = cqa_fuse(feats(v, q), fx.store, fx.p);
  for (int i = 0; i < 4; ++i) CHECK((a.row(i) - q.row(0)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("single clip and token: B is the clip itself") {
  Fixture fx(3);
  fx.select_block(3, 3);
  Rng rng(4);
  const Matrix v = random_matrix(1, 3, rng), q = random_matrix(1, 3, rng);
  const Matrix vb = cqa_fuse(feats(v, q), fx.store, fx.p);
  CHECK((vb - v.cwiseProduct(v)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("zero similarity averages the query") {
  Fixture fx(3);
  fx.select_block(1, 3);
  fx.store.value(fx.p.w_video).setZero();
  fx.store.value(fx.p.w_query).setZero();
  fx.store.value(fx.p.w_joint).setZero();
  Rng rng(5);
  const Matrix v = random_matrix(2, 3, rng), q = random_matrix(2, 3, rng);
  const Matrix a = cqa_fuse(feats(v, q), fx.store, fx.p);
  const Eigen::RowVectorXd mean = 0.5 * (q.row(0) + q.row(1));
  for (int i = 0; i < 2; ++i) CHECK((a.row(i) - mean).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("query permutation with its mask leaves the output unchanged") {
  Fixture fx(4, 7);
  Rng rng(6);
  const Matrix v = random_matrix(5, 4, rng), q = random_matrix(4, 4, rng);
  const ad::RowMask mask{true, true, false, true};
  Matrix qp(4, 4);
  qp << q.row(3), q.row(2), q.row(0), q.row(1);
  const ad::RowMask mp{true, false, true, true};
  const Matrix x1 = cqa_fuse(feats(v, q), fx.store, fx.p, mask);
  const Matrix x2 = cqa_fuse(feats(v, qp), fx.store, fx.p, mp);
  CHECK((x1 - x2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("masked query positions behave like absent ones") {
  Fixture fx(4, 8);
  Rng rng(7);
  const Matrix v = random_matrix(5, 4, rng), q = random_matrix(3, 4, rng);
  Matrix padded(5, 4);
  padded << q, random_matrix(2, 4, rng, 100.0);
  const Matrix x1 = cqa_fuse(feats(v, q), fx.store, fx.p);
  const Matrix x2 = cqa_fuse(feats(v, padded), fx.store, fx.p, {true, true, true, false, false});
  CHECK((x1 - x2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(cqa_fuse(feats(v, q), fx.store, fx.p, {false, false, false}), ConfigError);
}

TEST_CASE("row attention sums to one") {
  Fixture fx(4, 9);
  Rng rng(8);
  ad::Tape t(false);
  const auto s = cqa_similarity(t, fx.store, fx.p, t.constant(random_matrix(5, 4, rng)),
                                t.constant(random_matrix(3, 4, rng)));
  const auto sr = ad::softmax_rows(s, {true, false, true});
  for (int i = 0; i < 5; ++i) CHECK(std::abs(sr.value().row(i).sum() - 1.0) < 1e-6);
}

TEST_CASE("fusion gradients match finite differences") {
  Fixture fx(6, 10);
  Rng rng(9);
  Matrix v = random_matrix(4, 6, rng), q = random_matrix(3, 6, rng);
  const Matrix w = random_matrix(4, 6, rng);
  auto build = [&](ad::Tape& t) {
    auto leaves = param_leaves(t, fx.store);
    const auto vp = t.input(v), qp = t.input(q);
    leaves.push_back(vp);
    leaves.push_back(qp);
    const auto x = cqa_fuse(t, fx.store, fx.p, vp, qp);
    return std::pair{ad::sum(ad::hadamard(x, t.constant(w))), leaves};
  };
  auto targets = all_params(fx.store);
  targets.push_back(&v);
  targets.push_back(&q);
  const auto r = gradient_check(targets, build);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}
