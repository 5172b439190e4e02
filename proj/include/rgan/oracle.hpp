#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgan/common.hpp"
#include "rgan/transition.hpp"

namespace rgan {

/// Rows of conditional probabilities over c classes on a finite support.
class FinitePosterior {
 public:
  explicit FinitePosterior(Eigen::MatrixXd rows);
  const Eigen::MatrixXd& rows() const { return rows_; }

 private:
  Eigen::MatrixXd rows_;
};

struct SimplexSolverSettings {
  double step = 0.1;
  int max_iterations = 10000;
  double stop_norm = 1e-10;
};

struct SimplexSolution {
  Vector minimizer;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes  sum_j w_j * -log (T^T q)_j  over the probability simplex by
/// projected gradient descent: the direction comes from a projected step of
/// `settings.step`, the step length from a bisection on the slope along it.
SimplexSolution minimize_corrected_cross_entropy(const Vector& noisy_weights, const TransitionMatrix& transition,
                                                 const SimplexSolverSettings& settings = {});

/// Exhaustive grid search over q = (t, 1 - t), for two classes only.
Vector grid_minimize_corrected_cross_entropy(const Vector& noisy_weights, const TransitionMatrix& transition,
                                             double grid_step = 1e-3);

/// Euclidean projection onto the probability simplex.
Vector project_to_simplex(const Vector& v);

struct Theorem1Report {
  double max_deviation = 0.0;
  double tolerance = 0.0;
  double condition_number = 0.0;
  bool passed = false;
  FinitePosterior minimizers{Eigen::MatrixXd::Constant(1, 2, 0.5)};
  /// Two-class grid cross-check; nullopt for c > 2.
  std::optional<double> grid_deviation;
};

/// Derives the noisy joint, minimizes the forward-corrected cross-entropy per
/// support point and compares with the clean posterior. Throws SingularityError
/// before solving when T is singular.
Theorem1Report verify_theorem1(const JointTable& clean, const TransitionMatrix& transition, double tolerance);

struct DiscriminatorTable {
  Eigen::MatrixXd values;
  std::vector<std::pair<Eigen::Index, int>> undefined_cells;  // 0/0 cells, set to 0.5
};

/// Pointwise p_real / (p_real + p_gen).
DiscriminatorTable optimal_discriminator(const JointTable& p_real, const JointTable& p_gen);

struct Counterexample {
  Eigen::MatrixXd clean_a;
  Eigen::MatrixXd clean_b;
  double noisy_difference = 0.0;
  double clean_difference = 0.0;
};

struct Theorem2Report {
  std::string direction;  // "if", "only_if", "both" or "none"
  double max_deviation = 0.0;
  double tolerance = 0.0;
  double bound = 0.0;     // threshold applied to max_deviation
  double condition_number = 0.0;
  bool passed = false;
  bool hypothesis_violated = false;
  std::optional<Counterexample> counterexample;
};

/// (if) equal clean joints give equal noisy joints; (only if) equal noisy joints
/// under a nonsingular T give clean joints within 10 * tol * cond(T). With a
/// singular T the second direction reports a violated hypothesis and a
/// counterexample built from the null space of T^T.
Theorem2Report verify_theorem2(const JointTable& clean_real, const JointTable& clean_gen,
                               const TransitionMatrix& transition, double tolerance);

void to_json(nlohmann::json& j, const Theorem1Report& r);
void to_json(nlohmann::json& j, const Theorem2Report& r);

}  // namespace rgan
