#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgan/common.hpp"
#include "rgan/diffcore.hpp"
#include "rgan/synthdata.hpp"
#include "rgan/transition.hpp"

namespace rgan {

enum class Variant { gan, acgan, racgan, cgan, rcgan };
enum class Conditioning { concat, projection };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);
std::string to_string(Conditioning c);
Conditioning conditioning_from_string(const std::string& name);

/// AC-GAN family: a classifier head shares the discriminator trunk.
bool has_classifier_head(Variant v);
/// cGAN family: the discriminator sees the label.
bool has_conditional_discriminator(Variant v);
/// Variants that consume the model-side transition matrix.
bool uses_transition(Variant v);

struct GanConfig {
  Variant variant = Variant::rcgan;
  Conditioning conditioning = Conditioning::concat;
  bool improved = false;  // mutual-information head Q
  int latent_dim = 16;
  double lambda_ac_real = 1.0;
  double lambda_ac_gen = 1.0;
  double lambda_mi_gen = 0.04;
  double lambda_mi_q = 1.0;
  AdamSettings adam{};
  int n_dis = 1;
  int batch_size = 64;
  long iterations = 20000;
  long eval_interval = 500;
  long eval_samples = 10000;
  int hidden_width = 128;
  int hidden_layers = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const GanConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
GanConfig gan_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Objectives. Scores are pre-sigmoid; probabilities are softmax rows.
// ---------------------------------------------------------------------------

struct AdversarialLoss {
  double discriminator = 0.0;  // -E log s(real) - E log(1 - s(fake))
  double generator = 0.0;      // non-saturating: -E log s(fake)
  Vector real_grad;            // d discriminator / d real scores
  Vector fake_grad;            // d discriminator / d fake scores
  Vector generator_grad;       // d generator / d fake scores
};

AdversarialLoss loss_gan(std::span<const double> real_scores, std::span<const double> fake_scores);

/// Same formula; the discriminator inputs carry labels.
AdversarialLoss loss_cgan(std::span<const double> real_scores, std::span<const double> fake_scores);

/// Same formula again; real scores pair x with its noisy label, fake scores pair
/// G(z, clean label) with a label resampled through T.
AdversarialLoss loss_rcgan(std::span<const double> real_scores, std::span<const double> fake_scores);

inline constexpr double kProbabilityFloor = 1e-12;

struct ClassificationLoss {
  double value = 0.0;
  Matrix probability_grad;   // d value / d probabilities
  std::size_t clamped = 0;   // target probabilities floored at 1e-12
};

/// Mean -log C(y | x) over the batch.
ClassificationLoss loss_ac_real(const Matrix& probabilities, std::span<const int> labels);

/// Forward-corrected: mean -log sum_k T[k][noisy] * C(k | x).
ClassificationLoss loss_rac_real(const Matrix& clean_probabilities, std::span<const int> noisy_labels,
                                 const TransitionMatrix& transition);

/// Mean -log C(intended | G(z, intended)); used against the noisy classifier by
/// AC-GAN and the clean one by rAC-GAN.
ClassificationLoss loss_ac_gen(const Matrix& probabilities, std::span<const int> intended_labels);

/// Mean -log Q(intended | G(z, intended)).
ClassificationLoss loss_mi(const Matrix& q_probabilities, std::span<const int> intended_labels);

/// Draws the discriminator-side label for each generated sample from T[clean].
std::vector<int> resample_noisy_label(std::span<const int> clean_labels, const TransitionMatrix& transition,
                                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

/// Discriminator trunk shared by the adversarial head and, depending on the
/// variant, the classifier head and the MI head.
struct Critic {
  MlpParams trunk;                 // activated feature output
  MlpParams d_head;                // features -> 1
  std::optional<MlpParams> c_head; // features -> c
  std::optional<MlpParams> q_head; // features -> c
  std::optional<MlpParams> embed;  // projection conditioning: one-hot -> features, bias held at zero
};

struct CriticOutput {
  Vector scores;
  Matrix class_probabilities;  // empty without a classifier head
  Matrix q_probabilities;      // empty without an MI head
  // caches
  Matrix input;
  Matrix labels_one_hot;
  ForwardResult trunk;
  ForwardResult d_head;
  std::optional<ForwardResult> c_head;
  std::optional<ForwardResult> q_head;
  Matrix embedding;
};

struct CriticGradients {
  MlpGradients trunk;
  MlpGradients d_head;
  std::optional<MlpGradients> c_head;
  std::optional<MlpGradients> q_head;
  std::optional<MlpGradients> embed;
  Matrix input;  // gradient w.r.t. the data columns only (n x 2)
};

Critic make_critic(const GanConfig& config, int classes, int data_dim, std::uint64_t seed);
MlpParams make_generator(const GanConfig& config, int classes, int data_dim, std::uint64_t seed);

/// `labels` must be non-empty exactly when the variant conditions the discriminator.
CriticOutput critic_forward(const Critic& critic, const GanConfig& config, const Matrix& x,
                            std::span<const int> labels, int classes);

/// Gradients given d loss / d scores and d loss / d logits of each head (empty when unused).
CriticGradients critic_backward(const Critic& critic, const CriticOutput& out, const Vector& score_grad,
                                const Matrix& class_logit_grad, const Matrix& q_logit_grad);

/// Generator input rows [z, one_hot(label)].
Matrix generator_input(const Matrix& latent, std::span<const int> labels, int classes);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct HistoryEntry {
  long iteration = 0;
  double fid = 0.0;
  double intra_fid = 0.0;
  double gan_test = 0.0;
  double gan_train = 0.0;  // not computed during training; NaN in snapshots
};

struct TrainedModel {
  GanConfig config;
  int classes = 0;
  MlpParams generator;
  Critic critic;
  TransitionMatrix model_transition = TransitionMatrix::identity(2);
  std::vector<HistoryEntry> history;
  long selected_iteration = 0;  // iteration of the returned snapshot
  std::vector<std::string> warnings;
};

struct StepRecord {
  long iteration = 0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
};

struct TrainOptions {
  /// Enables the GAN-test column of the history.
  const MixtureSpec* mixture = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

/// Alternating optimization of the configured objective on noisy-labeled data.
/// Returns the snapshot with the lowest FID (earliest on ties); throws
/// NumericError when a loss becomes non-finite.
TrainedModel train(const GanConfig& config, const LabeledDataset& data, const TransitionMatrix& model_transition,
                   const TrainOptions& options = {});

/// G(z, label) with z ~ N(0, I) drawn from `seed`.
Matrix sample(const TrainedModel& model, std::span<const int> labels, std::uint64_t seed);

/// Generates with an explicit latent matrix (rows match `labels`).
Matrix sample_with_latent(const TrainedModel& model, const Matrix& latent, std::span<const int> labels);

inline constexpr const char* kModelFormat = "rgan-model-v1";

std::string config_hash(const GanConfig& config);
nlohmann::json model_to_json(const TrainedModel& model);
/// Throws FormatError on malformed input.
TrainedModel model_from_json(const nlohmann::json& j);

inline constexpr const char* kHistoryCsvHeader = "iteration,fid,intra_fid,gan_test,gan_train";
std::string history_csv(const std::vector<HistoryEntry>& history);

}  // namespace rgan
