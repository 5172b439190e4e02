#include <doctest.h>

#include <cmath>
#include <random>

#include "rgan/transition.hpp"

using namespace rgan;

namespace {

Eigen::MatrixXd random_stochastic(int c, Rng& rng, double diag_boost) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(c, c);
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = u(rng) + (i == j ? diag_boost : 0.0);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

Eigen::MatrixXd random_joint(int m, int c, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::MatrixXd v(m, c);
  for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = e(rng);
  return v / v.sum();
}

}  // namespace

TEST_CASE("symmetric builder follows (1-mu)I + (mu/c)J") {
  const auto t = build_symmetric(2, 0.5);
  CHECK(t(0, 0) == doctest::Approx(0.75));
  CHECK(t(0, 1) == doctest::Approx(0.25));
  CHECK(build_symmetric(5, 0.0).is_identity());
  const auto t10 = build_symmetric(10, 0.9);
  CHECK(t10(3, 3) == doctest::Approx(0.19).epsilon(1e-12));
  CHECK(t10(3, 4) == doctest::Approx(0.09).epsilon(1e-12));
  CHECK_THROWS_AS(build_symmetric(1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(build_symmetric(3, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(build_symmetric(3, -0.1), std::invalid_argument);
}

TEST_CASE("asymmetric builder") {
  const LabelFlip flip[] = {{0, 1}};
  const auto t = build_asymmetric(4, 0.3, flip);
  CHECK(t(0, 0) == doctest::Approx(0.7));
  CHECK(t(0, 1) == doctest::Approx(0.3));
  for (int i = 1; i < 4; ++i) CHECK(t(i, i) == 1.0);

  // Realistic confusion pattern: 9->1, 2->0, 4->7, 3<->5.
  const LabelFlip cifar[] = {{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
  const auto t10 = build_asymmetric(10, 0.4, cifar);
  int non_identity = 0;
  for (int i = 0; i < 10; ++i) non_identity += t10(i, i) != 1.0;
  CHECK(non_identity == 5);

  const LabelFlip pair[] = {{0, 1}, {1, 0}};
  CHECK(std::isinf(condition_number(build_asymmetric(2, 0.5, pair))));
  CHECK(std::isfinite(condition_number(build_asymmetric(2, 0.49, pair))));

  const LabelFlip dup[] = {{0, 1}, {0, 2}};
  const LabelFlip self[] = {{1, 1}};
  const LabelFlip out_of_range[] = {{0, 4}};
  CHECK_THROWS_AS(build_asymmetric(3, 0.2, dup), std::invalid_argument);
  CHECK_THROWS_AS(build_asymmetric(3, 0.2, self), std::invalid_argument);
  CHECK_THROWS_AS(build_asymmetric(3, 0.2, out_of_range), std::invalid_argument);
}

TEST_CASE("matrix validation") {
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.5, 0.6, 0.5;
  CHECK_THROWS_AS(TransitionMatrix{bad}, std::invalid_argument);
  Eigen::MatrixXd negative(2, 2);
  negative << 1.1, -0.1, 0.0, 1.0;
  CHECK_THROWS_AS(TransitionMatrix{negative}, std::invalid_argument);
  CHECK_THROWS_AS(TransitionMatrix{Eigen::MatrixXd::Ones(2, 3) / 3.0}, std::invalid_argument);
}

TEST_CASE("corrupt_labels frequencies stay within 3 sigma of T") {
  std::vector<int> labels(100000, 0);
  const auto t = build_symmetric(2, 0.5);
  const auto noisy = corrupt_labels(labels, t, 7);
  double flipped = 0;
  for (int y : noisy) flipped += y == 1;
  const double p = 0.25;
  CHECK(std::abs(flipped / 1e5 - p) <= 3.0 * std::sqrt(p * (1 - p) / 1e5));

  // Every entry >= 0.05 of a random 4-class channel.
  Rng rng(3);
  const TransitionMatrix t4(random_stochastic(4, rng, 1.0));
  for (int i = 0; i < 4; ++i) {
    std::vector<int> src(100000, i);
    const auto out = corrupt_labels(src, t4, 100 + i);
    for (int j = 0; j < 4; ++j) {
      const double pij = t4(i, j);
      if (pij < 0.05) continue;
      double hits = 0;
      for (int y : out) hits += y == j;
      CHECK(std::abs(hits / 1e5 - pij) <= 3.0 * std::sqrt(pij * (1 - pij) / 1e5));
    }
  }
}

TEST_CASE("corrupt_labels is the identity under T=I and deterministic") {
  std::vector<int> labels{0, 1, 2, 2, 1, 0, 2};
  CHECK(corrupt_labels(labels, TransitionMatrix::identity(3), 11) == labels);
  const auto t = build_symmetric(3, 0.6);
  CHECK(corrupt_labels(labels, t, 5) == corrupt_labels(labels, t, 5));
  std::vector<int> bad{0, 3};
  CHECK_THROWS_AS(corrupt_labels(bad, t, 1), std::invalid_argument);
}

TEST_CASE("condition number") {
  CHECK(condition_number(TransitionMatrix::identity(4)) == doctest::Approx(1.0));
  CHECK(std::isinf(condition_number(build_symmetric(3, 1.0))));
  // Symmetric channels are symmetric matrices, so kappa = |lambda|max / |lambda|min.
  const auto t = build_symmetric(2, 0.5);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t.entries());
  const Eigen::VectorXd lambda = eig.eigenvalues().cwiseAbs();
  CHECK(condition_number(t) == doctest::Approx(lambda.maxCoeff() / lambda.minCoeff()).epsilon(1e-12));
  CHECK(condition_number(t) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("push_forward and recover_clean") {
  Eigen::MatrixXd tm(2, 2);
  tm << 0.8, 0.2, 0.2, 0.8;
  const TransitionMatrix t(tm);
  Eigen::MatrixXd row(1, 2);
  row << 0.9, 0.1;
  const JointTable clean(row);
  const JointTable noisy = push_forward(clean, t);
  // Hand multiply: noisy[j] = sum_i clean[i] T[i][j].
  CHECK(noisy.values()(0, 0) == doctest::Approx(0.8 * 0.9 + 0.2 * 0.1).epsilon(1e-14));
  CHECK(noisy.values()(0, 1) == doctest::Approx(0.2 * 0.9 + 0.8 * 0.1).epsilon(1e-14));
  const RecoveredTable back = recover_clean(noisy, t);
  CHECK(back.values(0, 0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(back.values(0, 1) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_FALSE(back.infeasible);

  const JointTable uniform(Eigen::MatrixXd::Constant(3, 4, 1.0 / 12));
  const JointTable u_noisy = push_forward(uniform, build_symmetric(4, 0.37));
  CHECK((u_noisy.values().array() - 1.0 / 12).abs().maxCoeff() < 1e-15);
  CHECK(push_forward(uniform, TransitionMatrix::identity(4)).values() == uniform.values());

  CHECK_THROWS_AS(recover_clean(u_noisy, build_symmetric(4, 1.0)), SingularityError);
  CHECK_THROWS_AS(push_forward(uniform, build_symmetric(3, 0.1)), std::invalid_argument);
}

TEST_CASE("round trip on random channels") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 2 + trial % 5;
    const TransitionMatrix t(random_stochastic(c, rng, 2.0));
    const JointTable p(random_joint(1 + trial % 7, c, rng));
    const JointTable q = push_forward(p, t);
    CHECK(std::abs(q.values().sum() - 1.0) <= 1e-12);
    const RecoveredTable r = recover_clean(q, t);
    CHECK((r.values - p.values()).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("recovery under a misspecified channel flags infeasibility") {
  Eigen::MatrixXd row(1, 2);
  row << 0.99, 0.01;
  // Pretend the data went through no noise but recover with a heavy channel.
  const RecoveredTable r = recover_clean(JointTable(row), build_symmetric(2, 0.5));
  CHECK(r.infeasible);
  CHECK_FALSE(r.warnings.empty());
  CHECK(r.values.minCoeff() < 0.0);  // not clamped
}

TEST_CASE("json round trip") {
  const auto t = build_symmetric(3, 0.2);
  const nlohmann::json j = t;
  CHECK(j["c"] == 3);
  CHECK(transition_from_json(j).entries() == t.entries());
  CHECK_THROWS(transition_from_json(nlohmann::json{{"c", 2}, {"entries", {{1, 0}}}}));
}
