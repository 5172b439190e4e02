#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgan/common.hpp"

namespace rgan {

struct GaussianComponent {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
  double prior = 0.0;
};

/// Ground-truth class-conditional 2-D Gaussian mixture.
struct MixtureSpec {
  std::vector<GaussianComponent> components;
  std::string layout;

  int classes() const { return static_cast<int>(components.size()); }

  /// Throws std::invalid_argument when priors or covariances are invalid.
  void validate() const;
};

/// c isotropic components with means equally spaced on a circle, starting at (radius, 0).
MixtureSpec make_ring_mixture(int classes, double radius, double sigma);

enum class Split { train, validation, test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct LabeledDataset {
  Matrix points;  // n x 2
  std::vector<int> clean_labels;
  std::optional<std::vector<int>> noisy_labels;
  Split split = Split::train;

  std::size_t size() const { return clean_labels.size(); }
  bool has_noisy_labels() const { return noisy_labels.has_value(); }
  const std::vector<int>& labels(bool noisy) const;

  void validate(int classes) const;
};

/// Labels from the priors, points from the labeled component. Deterministic given `seed`.
LabeledDataset sample_dataset(const MixtureSpec& spec, std::size_t n, std::uint64_t seed,
                              Split split = Split::train);

/// Posterior over classes at `x`, computed in log space with max subtraction.
Vector bayes_posterior(const MixtureSpec& spec, const Eigen::Vector2d& x);

/// Row-wise posteriors for a batch of points (n x c).
Matrix bayes_posterior(const MixtureSpec& spec, const Matrix& points);

/// CSV with header `x1,x2,clean_label,noisy_label,split`; a missing noisy label is written empty.
void write_csv(std::ostream& os, const LabeledDataset& data);
LabeledDataset read_csv(std::istream& is);

void to_json(nlohmann::json& j, const MixtureSpec& spec);
MixtureSpec mixture_from_json(const nlohmann::json& j);

}  // namespace rgan
