#include <doctest.h>

#include <cmath>
#include <random>

#include "rgan/oracle.hpp"

using namespace rgan;

namespace {

TransitionMatrix random_transition(int c, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd t(c, c);
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) t(i, j) = u(rng) + (i == j ? 0.5 * c : 0.0);
    t.row(i) /= t.row(i).sum();
  }
  return TransitionMatrix(t);
}

JointTable random_joint(Eigen::Index m, int c, Rng& rng, double zero_fraction = 0.0) {
  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd v(m, c);
  for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = u(rng) < zero_fraction ? 0.0 : e(rng);
  if (v.sum() == 0.0) v(0, 0) = 1.0;
  v /= v.sum();
  return JointTable(v, 1e-10);
}

}  // namespace

TEST_CASE("simplex projection") {
  Vector in(3);
  in << 0.2, 0.3, 0.5;
  CHECK((project_to_simplex(in) - in).norm() <= 1e-15);
  Vector corner(2);
  corner << 2.0, 0.0;
  CHECK(project_to_simplex(corner)(0) == doctest::Approx(1.0));
  CHECK(project_to_simplex(corner)(1) == 0.0);
  CHECK((project_to_simplex(Vector::Constant(3, 0.5)) - Vector::Constant(3, 1.0 / 3)).norm() <= 1e-15);

  // KKT: out = max(v - theta, 0) for a single theta.
  Rng rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    Vector v(5);
    for (int i = 0; i < 5; ++i) v(i) = g(rng);
    const Vector p = project_to_simplex(v);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    double theta = 0.0;
    for (int i = 0; i < 5; ++i) {
      if (p(i) > 0.0) theta = v(i) - p(i);
    }
    for (int i = 0; i < 5; ++i) {
      if (p(i) > 0.0) {
        CHECK(std::abs(v(i) - p(i) - theta) <= 1e-12);
      } else {
        CHECK(v(i) <= theta + 1e-12);
      }
    }
  }
}

TEST_CASE("corrected cross-entropy minimizer is the clean posterior") {
  Rng rng(10);
  int checked = 0;
  for (int c : {2, 3, 5}) {
    for (int m = 1; m <= 6; ++m) {
      const auto t = random_transition(c, rng);
      const auto clean = random_joint(m, c, rng, 0.2);
      const auto report = verify_theorem1(clean, t, 1e-6);
      INFO("c = " << c << " m = " << m << " dev = " << report.max_deviation);
      CHECK(report.passed);
      CHECK(report.max_deviation <= 1e-6);
      CHECK(std::isfinite(report.condition_number));
      CHECK(report.minimizers.rows().rows() == m);
      if (c == 2) {
        REQUIRE(report.grid_deviation);
        CHECK(*report.grid_deviation <= 1e-3);
      } else {
        CHECK_FALSE(report.grid_deviation);
      }
      ++checked;
    }
  }
  CHECK(checked == 18);

  // A support point with no mass is left at the uniform row.
  Eigen::MatrixXd v(2, 2);
  v << 0.0, 0.0, 0.3, 0.7;
  const auto r = verify_theorem1(JointTable(v), build_symmetric(2, 0.4), 1e-6);
  CHECK(r.passed);
  CHECK(r.minimizers.rows()(0, 0) == 0.5);

  CHECK_THROWS_AS(verify_theorem1(JointTable(v), build_symmetric(2, 1.0), 1e-6), SingularityError);
  const nlohmann::json j = r;
  CHECK(j.at("passed") == true);
  CHECK(j.contains("grid_deviation"));
}

TEST_CASE("optimal discriminator") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0.5, 0.0, 0.25, 0.25;
  b << 0.25, 0.0, 0.5, 0.25;
  const auto d = optimal_discriminator(JointTable(a), JointTable(b));
  CHECK(d.values(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(d.values(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(d.values(1, 1) == 0.5);
  CHECK(d.values(0, 1) == 0.5);
  REQUIRE(d.undefined_cells.size() == 1);
  CHECK(d.undefined_cells[0].first == 0);
  CHECK(d.undefined_cells[0].second == 1);
}

TEST_CASE("noisy joints match exactly when clean joints match") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const int c = 2 + trial % 4;
    const auto t = random_transition(c, rng);
    const auto clean = random_joint(4, c, rng);
    const auto gen = recover_clean(push_forward(clean, t), t).as_table();
    const auto report = verify_theorem2(clean, gen, t, 1e-10);
    CHECK(report.direction == "both");
    CHECK(report.passed);
    CHECK_FALSE(report.hypothesis_violated);
    CHECK(report.max_deviation <= 1e-10);
  }

  Rng r2(22);
  const auto t = random_transition(3, r2);
  const auto a = random_joint(3, 3, r2);
  const auto b = random_joint(3, 3, r2);
  const auto apart = verify_theorem2(a, b, t, 1e-10);
  CHECK(apart.direction == "none");
  CHECK(apart.passed);
}

TEST_CASE("singular T admits distinct clean joints with equal noisy joints") {
  // Classes 1 and 2 collapse onto the same noisy label.
  Eigen::MatrixXd tm(3, 3);
  tm << 1, 0, 0, 0, 1, 0, 0, 1, 0;
  const TransitionMatrix t(tm);
  Eigen::MatrixXd a(2, 3), b(2, 3);
  a << 0.2, 0.1, 0.2, 0.1, 0.2, 0.2;
  b << 0.2, 0.3, 0.0, 0.1, 0.2, 0.2;

  const auto report = verify_theorem2(JointTable(a), JointTable(b), t, 1e-10);
  CHECK(report.direction == "only_if");
  CHECK(report.hypothesis_violated);
  CHECK_FALSE(report.passed);
  REQUIRE(report.counterexample);
  CHECK(report.counterexample->noisy_difference <= 1e-15);
  CHECK(report.counterexample->clean_difference == doctest::Approx(0.2));

  // Equal inputs: the counterexample is built from the null space instead.
  const auto same = verify_theorem2(JointTable(a), JointTable(a), t, 1e-10);
  CHECK(same.direction == "both");
  CHECK(same.hypothesis_violated);
  REQUIRE(same.counterexample);
  const auto& ce = *same.counterexample;
  CHECK(ce.noisy_difference <= 1e-12);
  CHECK(ce.clean_difference > 0.01);
  CHECK(std::abs(ce.clean_b.sum() - 1.0) <= 1e-12);
  CHECK(ce.clean_b.minCoeff() >= 0.0);
  CHECK((ce.clean_a * tm - ce.clean_b * tm).cwiseAbs().maxCoeff() <= 1e-12);

  const nlohmann::json j = same;
  CHECK(j.at("condition_number") == "inf");
  CHECK(j.contains("counterexample"));

  const auto uniform = verify_theorem2(JointTable(a), JointTable(a), build_symmetric(3, 1.0), 1e-10);
  REQUIRE(uniform.counterexample);
  CHECK(uniform.counterexample->noisy_difference <= 1e-12);
  CHECK(uniform.counterexample->clean_difference > 0.01);
}
