#include "rgan/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rgan {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

double corrected_ce(const Vector& weights, const Eigen::MatrixXd& t, const Vector& q) {
  const Vector mixed = t.transpose() * q;
  double f = 0.0;
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    if (weights(j) == 0.0) continue;
    if (mixed(j) <= 0.0) return std::numeric_limits<double>::infinity();
    f -= weights(j) * std::log(mixed(j));
  }
  return f;
}

// Infinite where a weighted class has zero corrected mass.
Vector corrected_ce_gradient(const Vector& weights, const Eigen::MatrixXd& t, const Vector& q) {
  const Vector mixed = t.transpose() * q;
  Vector ratio = Vector::Zero(weights.size());
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    if (weights(j) == 0.0) continue;
    ratio(j) = mixed(j) > 0.0 ? weights(j) / mixed(j) : std::numeric_limits<double>::infinity();
  }
  return -(t * ratio);
}

nlohmann::json finite_or_string(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf");
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

FinitePosterior::FinitePosterior(Eigen::MatrixXd rows) : rows_(std::move(rows)) {
  require(rows_.rows() >= 1 && rows_.cols() >= 2, "posterior needs >= 1 row and >= 2 classes");
  require(rows_.minCoeff() >= 0.0, "posterior entries must be nonnegative");
  for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
    require(std::abs(rows_.row(r).sum() - 1.0) <= 1e-12, "posterior row does not sum to 1");
  }
}

Vector project_to_simplex(const Vector& v) {
  // Sort-based projection (Held, Wolfe, Crowder).
  Vector u = v;
  std::sort(u.data(), u.data() + u.size(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    cumulative += u(k);
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (u(k) - candidate > 0.0) theta = candidate;
  }
  Vector out = (v.array() - theta).cwiseMax(0.0);
  out /= out.sum();
  return out;
}

SimplexSolution minimize_corrected_cross_entropy(const Vector& noisy_weights, const TransitionMatrix& transition,
                                                 const SimplexSolverSettings& settings) {
  const int c = transition.classes();
  require(noisy_weights.size() == c, "weight vector size mismatch");
  const Eigen::MatrixXd& t = transition.entries();
  SimplexSolution sol;
  sol.minimizer = Vector::Constant(c, 1.0 / c);
  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    const Vector grad = corrected_ce_gradient(noisy_weights, t, sol.minimizer);
    const Vector direction = project_to_simplex(sol.minimizer - settings.step * grad) - sol.minimizer;
    sol.iterations = iter + 1;
    // The objective is convex along the segment, so search on the sign of its
    // slope: slopes stay accurate near the optimum where values stop changing.
    auto slope = [&](double a) {
      return corrected_ce_gradient(noisy_weights, t, sol.minimizer + a * direction).dot(direction);
    };
    if (direction.norm() < settings.stop_norm || !(slope(0.0) < 0.0)) {
      sol.converged = true;
      break;
    }
    // Largest step keeping q + a * direction on the simplex (direction sums to 0).
    double reach = std::numeric_limits<double>::infinity();
    for (int i = 0; i < c; ++i) {
      if (direction(i) < 0.0) reach = std::min(reach, sol.minimizer(i) / -direction(i));
    }
    if (!std::isfinite(reach)) reach = 1.0;
    double alpha = reach;
    if (!(slope(reach) <= 0.0)) {
      double lo = 0.0, hi = reach;
      for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (slope(mid) < 0.0 ? lo : hi) = mid;
      }
      alpha = lo;
    }
    const Vector update = alpha * direction;
    // Land exactly on the boundary and keep the sum at 1 despite round-off.
    sol.minimizer = (sol.minimizer + update).cwiseMax(0.0);
    sol.minimizer /= sol.minimizer.sum();
    if (update.norm() < settings.stop_norm) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

Vector grid_minimize_corrected_cross_entropy(const Vector& noisy_weights, const TransitionMatrix& transition,
                                             double grid_step) {
  require(transition.classes() == 2, "grid search is implemented for two classes");
  require(grid_step > 0.0 && grid_step <= 0.5, "grid step must lie in (0, 0.5]");
  const auto steps = static_cast<long>(std::llround(1.0 / grid_step));
  Vector best = Vector::Constant(2, 0.5);
  double best_f = std::numeric_limits<double>::infinity();
  for (long k = 0; k <= steps; ++k) {
    const double a = static_cast<double>(k) / static_cast<double>(steps);
    Vector q(2);
    q << a, 1.0 - a;
    const double f = corrected_ce(noisy_weights, transition.entries(), q);
    if (f < best_f) {
      best_f = f;
      best = q;
    }
  }
  return best;
}

Theorem1Report verify_theorem1(const JointTable& clean, const TransitionMatrix& transition, double tolerance) {
  require(clean.classes() == transition.classes(), "class count mismatch");
  Theorem1Report report;
  report.tolerance = tolerance;
  report.condition_number = condition_number(transition);
  if (!std::isfinite(report.condition_number)) {
    throw SingularityError("forward correction is not identifiable: transition matrix is singular");
  }
  const JointTable noisy = push_forward(clean, transition);
  const int c = clean.classes();
  Eigen::MatrixXd minimizers(clean.support_size(), c);
  double worst = 0.0;
  double grid_worst = 0.0;
  for (Eigen::Index k = 0; k < clean.support_size(); ++k) {
    const double mass = clean.values().row(k).sum();
    if (mass <= 0.0) {
      // p(x_k) = 0: the loss does not depend on this point.
      minimizers.row(k).setConstant(1.0 / c);
      continue;
    }
    const Vector weights = noisy.values().row(k).transpose() / noisy.values().row(k).sum();
    const Vector target = clean.values().row(k).transpose() / mass;
    const SimplexSolution sol = minimize_corrected_cross_entropy(weights, transition);
    minimizers.row(k) = sol.minimizer.transpose();
    worst = std::max(worst, (sol.minimizer - target).cwiseAbs().maxCoeff());
    if (c == 2) {
      const Vector grid = grid_minimize_corrected_cross_entropy(weights, transition);
      grid_worst = std::max(grid_worst, (grid - target).cwiseAbs().maxCoeff());
    }
  }
  report.max_deviation = worst;
  report.minimizers = FinitePosterior(minimizers);
  if (c == 2) report.grid_deviation = grid_worst;
  report.passed = worst <= tolerance;
  return report;
}

DiscriminatorTable optimal_discriminator(const JointTable& p_real, const JointTable& p_gen) {
  require(p_real.support_size() == p_gen.support_size() && p_real.classes() == p_gen.classes(),
          "tables must share support and class count");
  DiscriminatorTable out;
  out.values.resize(p_real.support_size(), p_real.classes());
  for (Eigen::Index k = 0; k < p_real.support_size(); ++k) {
    for (int j = 0; j < p_real.classes(); ++j) {
      const double r = p_real.values()(k, j);
      const double g = p_gen.values()(k, j);
      if (r + g == 0.0) {
        out.values(k, j) = 0.5;
        out.undefined_cells.emplace_back(k, j);
      } else {
        out.values(k, j) = r / (r + g);
      }
    }
  }
  return out;
}

namespace {

std::optional<Counterexample> null_space_counterexample(const JointTable& base, const TransitionMatrix& transition) {
  const int c = transition.classes();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(transition.entries().transpose(), Eigen::ComputeFullV);
  if (svd.singularValues()(c - 1) >= kSingularThreshold) return std::nullopt;
  const Vector v = svd.matrixV().col(c - 1);  // T^T v = 0, hence sum(v) = 0
  auto max_step = [](const Eigen::RowVectorXd& row, const Vector& dir) {
    double t = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < dir.size(); ++i) {
      if (dir(i) < 0.0) t = std::min(t, row(i) / -dir(i));
    }
    return std::isfinite(t) ? t : 0.0;
  };
  auto try_base = [&](const Eigen::MatrixXd& a) -> std::optional<Counterexample> {
    Eigen::Index row = 0;
    a.rowwise().sum().maxCoeff(&row);
    const double up = max_step(a.row(row), v);
    const double down = max_step(a.row(row), -v);
    const double t = std::max(up, down);
    if (t <= 0.0) return std::nullopt;
    Counterexample ce;
    ce.clean_a = a;
    ce.clean_b = a;
    ce.clean_b.row(row) += (up >= down ? t : -t) * v.transpose();
    ce.clean_b = ce.clean_b.cwiseMax(0.0);
    ce.clean_difference = (ce.clean_a - ce.clean_b).cwiseAbs().maxCoeff();
    ce.noisy_difference = ((ce.clean_a - ce.clean_b) * transition.entries()).cwiseAbs().maxCoeff();
    return ce;
  };
  if (auto ce = try_base(base.values())) return ce;
  const Eigen::MatrixXd uniform =
      Eigen::MatrixXd::Constant(base.support_size(), c, 1.0 / static_cast<double>(base.support_size() * c));
  return try_base(uniform);
}

}  // namespace

Theorem2Report verify_theorem2(const JointTable& clean_real, const JointTable& clean_gen,
                               const TransitionMatrix& transition, double tolerance) {
  require(clean_real.support_size() == clean_gen.support_size() && clean_real.classes() == clean_gen.classes(),
          "tables must share support and class count");
  require(clean_real.classes() == transition.classes(), "class count mismatch with transition matrix");
  Theorem2Report report;
  report.tolerance = tolerance;
  report.condition_number = condition_number(transition);
  const JointTable noisy_real = push_forward(clean_real, transition);
  const JointTable noisy_gen = push_forward(clean_gen, transition);
  const double clean_dev = (clean_real.values() - clean_gen.values()).cwiseAbs().maxCoeff();
  const double noisy_dev = (noisy_real.values() - noisy_gen.values()).cwiseAbs().maxCoeff();
  const bool clean_match = clean_dev <= tolerance;
  const bool noisy_match = noisy_dev <= tolerance;

  report.passed = true;
  if (clean_match) {
    report.max_deviation = noisy_dev;
    report.bound = tolerance;
    report.passed = noisy_dev <= tolerance;
  }
  if (noisy_match) {
    if (!std::isfinite(report.condition_number)) {
      report.hypothesis_violated = true;
      report.passed = false;
      if (!clean_match) {
        Counterexample ce;
        ce.clean_a = clean_real.values();
        ce.clean_b = clean_gen.values();
        ce.clean_difference = clean_dev;
        ce.noisy_difference = noisy_dev;
        report.counterexample = std::move(ce);
      } else {
        report.counterexample = null_space_counterexample(clean_real, transition);
      }
    } else {
      const RecoveredTable rec_real = recover_clean(noisy_real, transition);
      const RecoveredTable rec_gen = recover_clean(noisy_gen, transition);
      const double recovered_dev = (rec_real.values - rec_gen.values).cwiseAbs().maxCoeff();
      const double deviation = std::max(recovered_dev, clean_dev);
      const double bound = 10.0 * tolerance * report.condition_number;
      report.max_deviation = std::max(report.max_deviation, deviation);
      report.bound = clean_match ? std::min(tolerance, bound) : bound;
      report.passed = report.passed && deviation <= bound;
    }
  }
  report.direction = clean_match && noisy_match ? "both" : clean_match ? "if" : noisy_match ? "only_if" : "none";
  return report;
}

void to_json(nlohmann::json& j, const Theorem1Report& r) {
  j = nlohmann::json{{"direction", "theorem1"},
                     {"max_deviation", r.max_deviation},
                     {"tolerance", r.tolerance},
                     {"condition_number", finite_or_string(r.condition_number)},
                     {"passed", r.passed}};
  if (r.grid_deviation) j["grid_deviation"] = *r.grid_deviation;
}

void to_json(nlohmann::json& j, const Theorem2Report& r) {
  j = nlohmann::json{{"direction", r.direction},
                     {"max_deviation", r.max_deviation},
                     {"tolerance", r.tolerance},
                     {"condition_number", finite_or_string(r.condition_number)},
                     {"passed", r.passed},
                     {"hypothesis_violated", r.hypothesis_violated}};
  if (r.counterexample) {
    j["counterexample"] = {{"clean_a", matrix_json(r.counterexample->clean_a)},
                           {"clean_b", matrix_json(r.counterexample->clean_b)},
                           {"noisy_difference", r.counterexample->noisy_difference},
                           {"clean_difference", r.counterexample->clean_difference}};
  }
}

}  // namespace rgan
