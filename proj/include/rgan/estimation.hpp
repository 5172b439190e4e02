#pragma once

#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgan/common.hpp"
#include "rgan/diffcore.hpp"
#include "rgan/synthdata.hpp"
#include "rgan/transition.hpp"

namespace rgan {

/// Maps a batch of points (n x 2) to noisy-label probabilities (n x c).
using ProbabilityModel = std::function<Matrix(const Matrix&)>;

struct EstimationConfig {
  /// Anchor percentile in (0, 100]; 100 selects the argmax.
  double percentile = 97.0;
  /// Early stopping via `max_steps` stands in for temperature scaling.
  ClassifierSettings classifier{.hidden = {64, 64},
                                .activation = Activation::relu,
                                .adam = {1e-3, 0.9, 0.999, 1e-8},
                                .epochs = 30,
                                .batch_size = 128,
                                .max_steps = 2000,
                                .seed = 0};

  void validate() const;
};

/// Default anchor percentile for a noise family: 97 for symmetric, 100 for asymmetric.
double default_percentile(bool symmetric_noise);

/// Softmax MLP trained by cross-entropy on (x, noisy label).
MlpParams train_noisy_classifier(const LabeledDataset& data, int classes, const ClassifierSettings& settings);

/// Wraps trained classifier parameters as a probability model.
ProbabilityModel as_probability_model(MlpParams classifier);

struct TransitionEstimate {
  TransitionMatrix matrix = TransitionMatrix::identity(2);
  std::vector<Eigen::Index> anchor_rows;    // pool row chosen per class
  std::vector<double> anchor_confidence;    // C'(noisy = i | anchor_i)
  double condition_number = 0.0;
  bool near_singular = false;               // condition number above 1e6 or infinite
};

/// For each class i picks the pool point at the nearest-rank `percentile` of
/// C'(noisy = i | x) and reads row i of T' off the classifier at that point.
TransitionEstimate estimate_T(const ProbabilityModel& classifier, const Matrix& pool, double percentile);

/// Emits {"c", "entries", "diagnostics": {...}}; `reference` adds the max-abs error.
nlohmann::json estimate_to_json(const TransitionEstimate& estimate, const TransitionMatrix* reference = nullptr);

/// Largest absolute entrywise difference.
double max_abs_difference(const TransitionMatrix& a, const TransitionMatrix& b);

}  // namespace rgan
