#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgan/common.hpp"
#include "rgan/diffcore.hpp"
#include "rgan/synthdata.hpp"

namespace rgan {

struct GaussianMoments {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
};

/// Sample mean and unbiased (1 / (n - 1)) covariance. Needs n >= 3.
GaussianMoments fit_moments(const Matrix& samples);

/// Squared 2-Wasserstein distance between the Gaussians described by `a` and `b`:
/// |m_a - m_b|^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2}). Round-off below zero is clamped.
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

double fid(const Matrix& generated, const Matrix& real);

enum class LabelMode { clean, noisy };

std::string to_string(LabelMode mode);

struct IntraFid {
  std::vector<std::optional<double>> per_class;  // nullopt when a class had < 3 samples
  double mean = 0.0;                              // unweighted over present classes
  LabelMode mode = LabelMode::clean;
  std::vector<std::string> warnings;
};

/// Per-class FID between generated samples of intended label i and real samples
/// whose label (clean or noisy, per `mode`) is i.
IntraFid intra_fid(const Matrix& generated, std::span<const int> intended_labels, const LabeledDataset& real,
                   LabelMode mode, int classes);

/// Fraction of generated samples the analytic Bayes classifier assigns to their intended label.
double gan_test(const Matrix& generated, std::span<const int> intended_labels, const MixtureSpec& spec);

struct GanTrainSettings {
  ClassifierSettings classifier;
  int averaged_epochs = 10;
};

/// Trains a fresh classifier on (generated, intended label) and reports its clean
/// test accuracy averaged over the final `averaged_epochs` epochs.
double gan_train(const Matrix& generated, std::span<const int> intended_labels, const LabeledDataset& real_test,
                 int classes, const GanTrainSettings& settings);

/// Sample Pearson correlation. Throws std::domain_error on a constant sequence.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct MetricsReport {
  double fid = 0.0;
  IntraFid intra_fid_clean;
  IntraFid intra_fid_noisy;
  double gan_test = 0.0;
  double gan_train = 0.0;
  std::size_t generated_samples = 0;
  std::size_t real_samples = 0;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const IntraFid& value);
void to_json(nlohmann::json& j, const MetricsReport& report);

/// Flat CSV row `fid,intra_fid,intra_fid_noisy,gan_test,gan_train` (no newline).
std::string csv_row(const MetricsReport& report);
inline constexpr const char* kMetricsCsvHeader = "fid,intra_fid,intra_fid_noisy,gan_test,gan_train";

}  // namespace rgan
