#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgan/common.hpp"

namespace rgan {

/// Row-stochastic label channel: entry (i, j) is p(noisy = j | clean = i).
class TransitionMatrix {
 public:
  /// Validates shape, range and row sums (within 1e-12).
  explicit TransitionMatrix(Eigen::MatrixXd entries);

  static TransitionMatrix identity(int classes);

  int classes() const { return static_cast<int>(entries_.rows()); }
  double operator()(int clean, int noisy) const { return entries_(clean, noisy); }
  const Eigen::MatrixXd& entries() const { return entries_; }

  bool is_identity() const;

 private:
  Eigen::MatrixXd entries_;
};

struct LabelFlip {
  int source = 0;
  int target = 0;
};

/// (1 - mu) I + (mu / c) J: the label is redrawn uniformly over all classes
/// with probability mu.
TransitionMatrix build_symmetric(int classes, double mu);

/// Each flip i -> j moves mass mu from (i, i) to (i, j); other rows stay identity.
TransitionMatrix build_asymmetric(int classes, double mu, std::span<const LabelFlip> flips);

/// Samples each output label from row `T[label]`. Deterministic given `seed`.
std::vector<int> corrupt_labels(std::span<const int> labels, const TransitionMatrix& transition,
                                std::uint64_t seed);

/// Samples in place from an already seeded generator; shared by the training loop.
void corrupt_labels_into(std::span<const int> labels, const TransitionMatrix& transition, Rng& rng,
                         std::span<int> out);

/// Smallest singular value below this counts as singular.
inline constexpr double kSingularThreshold = 1e-12;

/// 2-norm condition number; +infinity when the channel is singular.
double condition_number(const TransitionMatrix& transition);

/// Joint probability table over a finite support: values(k, i) = p(x_k, y = i).
class JointTable {
 public:
  /// Validates nonnegativity and unit total mass (within `sum_tolerance`).
  explicit JointTable(Eigen::MatrixXd values, double sum_tolerance = 1e-12);

  Eigen::Index support_size() const { return values_.rows(); }
  int classes() const { return static_cast<int>(values_.cols()); }
  const Eigen::MatrixXd& values() const { return values_; }

 private:
  Eigen::MatrixXd values_;
};

/// Noisy joint per support point: noisy row = T^T * clean row.
JointTable push_forward(const JointTable& clean, const TransitionMatrix& transition);

/// Result of inverting the channel. Entries are not clamped; rows that leave
/// [-1e-9, 1 + 1e-9] set `infeasible` and record a warning.
struct RecoveredTable {
  Eigen::MatrixXd values;
  bool infeasible = false;
  std::vector<std::string> warnings;

  /// Reinterprets the result as a JointTable; throws if it is infeasible.
  JointTable as_table(double sum_tolerance = 1e-10) const;
};

/// clean row = (T^T)^{-1} * noisy row. Throws SingularityError on a singular T.
RecoveredTable recover_clean(const JointTable& noisy, const TransitionMatrix& transition);

void to_json(nlohmann::json& j, const TransitionMatrix& t);
TransitionMatrix transition_from_json(const nlohmann::json& j);

}  // namespace rgan
