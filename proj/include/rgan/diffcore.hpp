#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgan/common.hpp"

namespace rgan {

enum class Activation { identity, relu, leaky_relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// One affine map `x * weight + bias`, weight shaped (fan_in x fan_out).
struct DenseLayer {
  Matrix weight;
  RowVector bias;
};

/// Parameters of a fully connected network. The hidden activation is applied
/// after every layer except the last; `activate_output` applies it there too,
/// which is how shared trunks expose their feature layer.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation hidden_activation = Activation::relu;
  bool activate_output = false;
  double leaky_slope = 0.1;

  std::vector<int> layer_sizes() const;
  int input_size() const { return static_cast<int>(layers.front().weight.rows()); }
  int output_size() const { return static_cast<int>(layers.back().weight.cols()); }
  std::size_t parameter_count() const;

  /// Same shapes and activation settings, all values zero.
  MlpParams zeros_like() const;
  bool all_finite() const;

  /// Flat view helpers used by the optimizer and the gradient checker.
  double& coordinate(std::size_t index);
  double coordinate(std::size_t index) const;
};

/// Parameter gradients share the parameter layout.
using MlpGradients = MlpParams;

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Needs >= 2 sizes, all >= 1.
MlpParams mlp_init(std::span<const int> layer_sizes, Activation hidden_activation, std::uint64_t seed,
                   bool activate_output = false);

struct ForwardCache {
  std::vector<Matrix> inputs;           // input of each layer
  std::vector<Matrix> pre_activations;  // affine output of each layer
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

ForwardResult forward(const MlpParams& params, const Matrix& batch);

/// Forward pass without keeping activations.
Matrix predict(const MlpParams& params, const Matrix& batch);

struct BackwardResult {
  MlpGradients params;
  Matrix input;
};

/// Reverse-mode gradients of `<output_grad, forward(params, batch)>`.
BackwardResult backward(const MlpParams& params, const ForwardCache& cache, const Matrix& output_grad);

/// Accumulates `scale * src` into `dst` (same layout).
void add_scaled(MlpGradients& dst, const MlpGradients& src, double scale = 1.0);

struct AdamSettings {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  long step = 0;
  MlpParams first_moment;
  MlpParams second_moment;
  AdamSettings settings;

  static AdamState for_params(const MlpParams& params, const AdamSettings& settings);
};

/// Bias-corrected Adam update. Throws NumericError naming the layer when a
/// gradient is not finite; nothing is modified in that case.
void adam_step(MlpParams& params, AdamState& state, const MlpGradients& gradients);

struct LossAndGradient {
  double loss = 0.0;
  MlpGradients gradient;
};

using LossFunction = std::function<LossAndGradient(const MlpParams&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t worst_layer = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates_checked = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares analytic gradients with central differences on a random subsample
/// of coordinates. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(const LossFunction& loss, const MlpParams& params, double tolerance,
                           std::uint64_t seed = 0, std::size_t coordinates = 200, double step = 1e-5);

/// Row-wise softmax of logits.
Matrix softmax(const Matrix& logits);

/// Gradient w.r.t. logits given the gradient w.r.t. softmax probabilities.
Matrix softmax_backward(const Matrix& probabilities, const Matrix& probability_grad);

/// One-hot rows for labels in [0, classes).
Matrix one_hot(std::span<const int> labels, int classes);

/// Settings for the small softmax classifiers used by estimation and GAN-train.
struct ClassifierSettings {
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::relu;
  AdamSettings adam{1e-3, 0.9, 0.999, 1e-8};
  int epochs = 30;
  int batch_size = 128;
  /// When > 0, training stops after this many minibatch steps regardless of epochs.
  long max_steps = 0;
  std::uint64_t seed = 0;
};

/// Minibatch cross-entropy training of a softmax MLP. `on_epoch` (optional) is
/// called after every full epoch with the epoch index and the current params.
MlpParams train_classifier(const Matrix& points, std::span<const int> labels, int classes,
                           const ClassifierSettings& settings,
                           const std::function<void(int, const MlpParams&)>& on_epoch = {});

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Matrix& probabilities, std::span<const int> labels);

inline constexpr const char* kCheckpointFormat = "rgan-mlp-v1";

nlohmann::json checkpoint_to_json(const MlpParams& params);
/// Throws FormatError on a missing tag, a shape mismatch or non-finite values.
MlpParams checkpoint_from_json(const nlohmann::json& j);

}  // namespace rgan
