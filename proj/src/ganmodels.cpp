#include "rgan/ganmodels.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "rgan/metrics.hpp"

namespace rgan {

namespace {

constexpr int kDataDim = 2;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

std::vector<int> hidden_sizes(const GanConfig& c) { return std::vector<int>(static_cast<std::size_t>(c.hidden_layers), c.hidden_width); }

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::gan: return "gan";
    case Variant::acgan: return "acgan";
    case Variant::racgan: return "racgan";
    case Variant::cgan: return "cgan";
    case Variant::rcgan: return "rcgan";
  }
  return "gan";
}

Variant variant_from_string(const std::string& name) {
  if (name == "gan") return Variant::gan;
  if (name == "acgan") return Variant::acgan;
  if (name == "racgan") return Variant::racgan;
  if (name == "cgan") return Variant::cgan;
  if (name == "rcgan") return Variant::rcgan;
  throw std::invalid_argument("unknown variant: " + name);
}

std::string to_string(Conditioning c) { return c == Conditioning::concat ? "concat" : "projection"; }

Conditioning conditioning_from_string(const std::string& name) {
  if (name == "concat") return Conditioning::concat;
  if (name == "projection") return Conditioning::projection;
  throw std::invalid_argument("unknown conditioning mode: " + name);
}

bool has_classifier_head(Variant v) { return v == Variant::acgan || v == Variant::racgan; }
bool has_conditional_discriminator(Variant v) { return v == Variant::cgan || v == Variant::rcgan; }
bool uses_transition(Variant v) { return v == Variant::racgan || v == Variant::rcgan; }

void GanConfig::validate() const {
  require(lambda_ac_real >= 0.0 && lambda_ac_gen >= 0.0 && lambda_mi_gen >= 0.0 && lambda_mi_q >= 0.0,
          "trade-off weights must be nonnegative");
  require(n_dis >= 1, "n_dis must be >= 1");
  require(batch_size >= 2, "batch size must be >= 2");
  require(latent_dim >= 1, "latent dimension must be >= 1");
  require(iterations >= 0, "iteration budget must be >= 0");
  require(eval_interval >= 1, "eval interval must be >= 1");
  require(eval_samples >= 3, "eval samples must be >= 3");
  require(hidden_width >= 1 && hidden_layers >= 1, "network size must be positive");
  require(adam.learning_rate > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 &&
              adam.beta2 < 1.0 && adam.epsilon > 0.0,
          "invalid Adam settings");
}

void to_json(nlohmann::json& j, const GanConfig& c) {
  j = nlohmann::json{{"variant", to_string(c.variant)},
                     {"conditioning", to_string(c.conditioning)},
                     {"improved", c.improved},
                     {"latent_dim", c.latent_dim},
                     {"lambda_ac_real", c.lambda_ac_real},
                     {"lambda_ac_gen", c.lambda_ac_gen},
                     {"lambda_mi_gen", c.lambda_mi_gen},
                     {"lambda_mi_q", c.lambda_mi_q},
                     {"lr", c.adam.learning_rate},
                     {"beta1", c.adam.beta1},
                     {"beta2", c.adam.beta2},
                     {"epsilon", c.adam.epsilon},
                     {"n_dis", c.n_dis},
                     {"batch_size", c.batch_size},
                     {"iterations", c.iterations},
                     {"eval_interval", c.eval_interval},
                     {"eval_samples", c.eval_samples},
                     {"hidden_width", c.hidden_width},
                     {"hidden_layers", c.hidden_layers},
                     {"seed", c.seed}};
}

GanConfig gan_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "gan config must be a JSON object");
  GanConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "variant") c.variant = variant_from_string(value.get<std::string>());
      else if (key == "conditioning") c.conditioning = conditioning_from_string(value.get<std::string>());
      else if (key == "improved") c.improved = value.get<bool>();
      else if (key == "latent_dim") c.latent_dim = value.get<int>();
      else if (key == "lambda_ac_real") c.lambda_ac_real = value.get<double>();
      else if (key == "lambda_ac_gen") c.lambda_ac_gen = value.get<double>();
      else if (key == "lambda_mi_gen") c.lambda_mi_gen = value.get<double>();
      else if (key == "lambda_mi_q") c.lambda_mi_q = value.get<double>();
      else if (key == "lr") c.adam.learning_rate = value.get<double>();
      else if (key == "beta1") c.adam.beta1 = value.get<double>();
      else if (key == "beta2") c.adam.beta2 = value.get<double>();
      else if (key == "epsilon") c.adam.epsilon = value.get<double>();
      else if (key == "n_dis") c.n_dis = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "iterations") c.iterations = value.get<long>();
      else if (key == "eval_interval") c.eval_interval = value.get<long>();
      else if (key == "eval_samples") c.eval_samples = value.get<long>();
      else if (key == "hidden_width") c.hidden_width = value.get<int>();
      else if (key == "hidden_layers") c.hidden_layers = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw std::invalid_argument("unknown gan config key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("gan config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

AdversarialLoss loss_gan(std::span<const double> real_scores, std::span<const double> fake_scores) {
  require(!real_scores.empty() && !fake_scores.empty(), "adversarial loss needs non-empty batches");
  AdversarialLoss out;
  const double nr = static_cast<double>(real_scores.size());
  const double nf = static_cast<double>(fake_scores.size());
  out.real_grad.resize(static_cast<Eigen::Index>(real_scores.size()));
  out.fake_grad.resize(static_cast<Eigen::Index>(fake_scores.size()));
  out.generator_grad.resize(static_cast<Eigen::Index>(fake_scores.size()));
  double real_term = 0.0;
  for (std::size_t k = 0; k < real_scores.size(); ++k) {
    const double s = real_scores[k];
    real_term += softplus(-s);  // -log sigmoid(s)
    out.real_grad(static_cast<Eigen::Index>(k)) = (sigmoid(s) - 1.0) / nr;
  }
  double fake_term = 0.0;
  double gen_term = 0.0;
  for (std::size_t k = 0; k < fake_scores.size(); ++k) {
    const double s = fake_scores[k];
    fake_term += softplus(s);  // -log(1 - sigmoid(s))
    gen_term += softplus(-s);
    const double p = sigmoid(s);
    out.fake_grad(static_cast<Eigen::Index>(k)) = p / nf;
    out.generator_grad(static_cast<Eigen::Index>(k)) = (p - 1.0) / nf;
  }
  out.discriminator = real_term / nr + fake_term / nf;
  out.generator = gen_term / nf;
  return out;
}

AdversarialLoss loss_cgan(std::span<const double> real_scores, std::span<const double> fake_scores) {
  return loss_gan(real_scores, fake_scores);
}

AdversarialLoss loss_rcgan(std::span<const double> real_scores, std::span<const double> fake_scores) {
  return loss_gan(real_scores, fake_scores);
}

ClassificationLoss loss_ac_real(const Matrix& probabilities, std::span<const int> labels) {
  require(probabilities.rows() >= 1, "classification loss needs a non-empty batch");
  require(static_cast<std::size_t>(probabilities.rows()) == labels.size(), "label count mismatch");
  ClassificationLoss out;
  out.probability_grad = Matrix::Zero(probabilities.rows(), probabilities.cols());
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (Eigen::Index k = 0; k < probabilities.rows(); ++k) {
    const int y = labels[static_cast<std::size_t>(k)];
    require(y >= 0 && y < probabilities.cols(), "label out of range");
    double s = probabilities(k, y);
    if (s < kProbabilityFloor) {
      s = kProbabilityFloor;
      ++out.clamped;
    } else {
      out.probability_grad(k, y) = -1.0 / (s * n);
    }
    total += -std::log(s);
  }
  out.value = total / n;
  return out;
}

ClassificationLoss loss_rac_real(const Matrix& clean_probabilities, std::span<const int> noisy_labels,
                                 const TransitionMatrix& transition) {
  require(clean_probabilities.rows() >= 1, "classification loss needs a non-empty batch");
  require(static_cast<std::size_t>(clean_probabilities.rows()) == noisy_labels.size(), "label count mismatch");
  require(clean_probabilities.cols() == transition.classes(), "class count mismatch with transition matrix");
  ClassificationLoss out;
  out.probability_grad = Matrix::Zero(clean_probabilities.rows(), clean_probabilities.cols());
  const double n = static_cast<double>(noisy_labels.size());
  const int c = transition.classes();
  double total = 0.0;
  for (Eigen::Index k = 0; k < clean_probabilities.rows(); ++k) {
    const int y = noisy_labels[static_cast<std::size_t>(k)];
    require(y >= 0 && y < c, "label out of range");
    double s = 0.0;
    for (int clean = 0; clean < c; ++clean) s += transition(clean, y) * clean_probabilities(k, clean);
    if (s < kProbabilityFloor) {
      s = kProbabilityFloor;
      ++out.clamped;
    } else {
      for (int clean = 0; clean < c; ++clean) {
        if (transition(clean, y) != 0.0) out.probability_grad(k, clean) = -transition(clean, y) / (s * n);
      }
    }
    total += -std::log(s);
  }
  out.value = total / n;
  return out;
}

ClassificationLoss loss_ac_gen(const Matrix& probabilities, std::span<const int> intended_labels) {
  return loss_ac_real(probabilities, intended_labels);
}

ClassificationLoss loss_mi(const Matrix& q_probabilities, std::span<const int> intended_labels) {
  return loss_ac_real(q_probabilities, intended_labels);
}

std::vector<int> resample_noisy_label(std::span<const int> clean_labels, const TransitionMatrix& transition,
                                      std::uint64_t seed) {
  return corrupt_labels(clean_labels, transition, seed);
}

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

Critic make_critic(const GanConfig& config, int classes, int data_dim, std::uint64_t seed) {
  const bool concat_labels =
      has_conditional_discriminator(config.variant) && config.conditioning == Conditioning::concat;
  std::vector<int> sizes{data_dim + (concat_labels ? classes : 0)};
  const auto hidden = hidden_sizes(config);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  Critic critic;
  critic.trunk = mlp_init(sizes, Activation::leaky_relu, derive_seed(seed, "trunk"), /*activate_output=*/true);
  const std::vector<int> d_sizes{config.hidden_width, 1};
  critic.d_head = mlp_init(d_sizes, Activation::identity, derive_seed(seed, "d-head"));
  const std::vector<int> c_sizes{config.hidden_width, classes};
  if (has_classifier_head(config.variant)) {
    critic.c_head = mlp_init(c_sizes, Activation::identity, derive_seed(seed, "c-head"));
  }
  if (config.improved) critic.q_head = mlp_init(c_sizes, Activation::identity, derive_seed(seed, "q-head"));
  if (has_conditional_discriminator(config.variant) && config.conditioning == Conditioning::projection) {
    const std::vector<int> e_sizes{classes, config.hidden_width};
    critic.embed = mlp_init(e_sizes, Activation::identity, derive_seed(seed, "embed"));
  }
  return critic;
}

MlpParams make_generator(const GanConfig& config, int classes, int data_dim, std::uint64_t seed) {
  std::vector<int> sizes{config.latent_dim + classes};
  const auto hidden = hidden_sizes(config);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(data_dim);
  return mlp_init(sizes, Activation::relu, seed);
}

Matrix generator_input(const Matrix& latent, std::span<const int> labels, int classes) {
  require(static_cast<std::size_t>(latent.rows()) == labels.size(), "latent rows must match labels");
  Matrix in(latent.rows(), latent.cols() + classes);
  in.leftCols(latent.cols()) = latent;
  in.rightCols(classes) = one_hot(labels, classes);
  return in;
}

CriticOutput critic_forward(const Critic& critic, const GanConfig& config, const Matrix& x,
                            std::span<const int> labels, int classes) {
  const bool conditional = has_conditional_discriminator(config.variant);
  require(conditional == !labels.empty(), "labels must be given exactly for conditional discriminators");
  CriticOutput out;
  if (conditional) {
    require(static_cast<std::size_t>(x.rows()) == labels.size(), "label count mismatch");
    out.labels_one_hot = one_hot(labels, classes);
  }
  if (conditional && config.conditioning == Conditioning::concat) {
    out.input.resize(x.rows(), x.cols() + classes);
    out.input.leftCols(x.cols()) = x;
    out.input.rightCols(classes) = out.labels_one_hot;
  } else {
    out.input = x;
  }
  out.trunk = forward(critic.trunk, out.input);
  const Matrix& features = out.trunk.output;
  out.d_head = forward(critic.d_head, features);
  out.scores = out.d_head.output.col(0);
  if (critic.embed) {
    out.embedding = out.labels_one_hot * critic.embed->layers[0].weight;
    out.scores += (out.embedding.array() * features.array()).rowwise().sum().matrix();
  }
  if (critic.c_head) {
    out.c_head = forward(*critic.c_head, features);
    out.class_probabilities = softmax(out.c_head->output);
  }
  if (critic.q_head) {
    out.q_head = forward(*critic.q_head, features);
    out.q_probabilities = softmax(out.q_head->output);
  }
  return out;
}

CriticGradients critic_backward(const Critic& critic, const CriticOutput& out, const Vector& score_grad,
                                const Matrix& class_logit_grad, const Matrix& q_logit_grad) {
  const Eigen::Index n = out.input.rows();
  require(score_grad.size() == n, "score gradient size mismatch");
  CriticGradients g;
  auto d_back = backward(critic.d_head, out.d_head.cache, Matrix(score_grad));
  g.d_head = std::move(d_back.params);
  Matrix feature_grad = std::move(d_back.input);
  if (critic.embed) {
    // score += <embed(y), f>
    feature_grad += (out.embedding.array().colwise() * score_grad.array()).matrix();
    MlpGradients eg = critic.embed->zeros_like();
    const Matrix weighted = out.trunk.output.array().colwise() * score_grad.array();
    eg.layers[0].weight = out.labels_one_hot.transpose() * weighted;
    g.embed = std::move(eg);
  }
  if (critic.c_head) {
    if (class_logit_grad.size() > 0) {
      auto c_back = backward(*critic.c_head, out.c_head->cache, class_logit_grad);
      feature_grad += c_back.input;
      g.c_head = std::move(c_back.params);
    } else {
      g.c_head = critic.c_head->zeros_like();
    }
  }
  if (critic.q_head) {
    if (q_logit_grad.size() > 0) {
      auto q_back = backward(*critic.q_head, out.q_head->cache, q_logit_grad);
      feature_grad += q_back.input;
      g.q_head = std::move(q_back.params);
    } else {
      g.q_head = critic.q_head->zeros_like();
    }
  }
  auto t_back = backward(critic.trunk, out.trunk.cache, feature_grad);
  g.trunk = std::move(t_back.params);
  g.input = t_back.input.leftCols(kDataDim);
  return g;
}

namespace {

void accumulate(CriticGradients& into, const CriticGradients& from) {
  add_scaled(into.trunk, from.trunk);
  add_scaled(into.d_head, from.d_head);
  if (into.c_head) add_scaled(*into.c_head, *from.c_head);
  if (into.q_head) add_scaled(*into.q_head, *from.q_head);
  if (into.embed) add_scaled(*into.embed, *from.embed);
}

struct CriticOptimizer {
  AdamState trunk, d_head;
  std::optional<AdamState> c_head, q_head, embed;

  CriticOptimizer(const Critic& c, const AdamSettings& s)
      : trunk(AdamState::for_params(c.trunk, s)), d_head(AdamState::for_params(c.d_head, s)) {
    if (c.c_head) c_head = AdamState::for_params(*c.c_head, s);
    if (c.q_head) q_head = AdamState::for_params(*c.q_head, s);
    if (c.embed) embed = AdamState::for_params(*c.embed, s);
  }

  void step(Critic& c, const CriticGradients& g) {
    adam_step(c.trunk, trunk, g.trunk);
    adam_step(c.d_head, d_head, g.d_head);
    if (c.c_head) adam_step(*c.c_head, *c_head, *g.c_head);
    if (c.q_head) adam_step(*c.q_head, *q_head, *g.q_head);
    if (c.embed) {
      MlpGradients eg = *g.embed;
      eg.layers[0].bias.setZero();
      adam_step(*c.embed, *embed, eg);
    }
  }
};

std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// Precomputed real-data moments for in-training snapshots.
struct SnapshotEvaluator {
  GaussianMoments overall;
  std::vector<std::optional<GaussianMoments>> per_class;
  const MixtureSpec* mixture = nullptr;
  Matrix latent;
  std::vector<int> labels;

  SnapshotEvaluator(const LabeledDataset& data, int classes, const GanConfig& config, const MixtureSpec* spec)
      : overall(fit_moments(data.points)), mixture(spec) {
    for (int cls = 0; cls < classes; ++cls) {
      std::vector<Eigen::Index> rows;
      for (std::size_t k = 0; k < data.size(); ++k) {
        if (data.clean_labels[k] == cls) rows.push_back(static_cast<Eigen::Index>(k));
      }
      if (rows.size() < 3) {
        per_class.emplace_back(std::nullopt);
        continue;
      }
      Matrix pts(static_cast<Eigen::Index>(rows.size()), 2);
      for (std::size_t k = 0; k < rows.size(); ++k) pts.row(static_cast<Eigen::Index>(k)) = data.points.row(rows[k]);
      per_class.emplace_back(fit_moments(pts));
    }
    // A fixed latent batch across snapshots keeps the FID comparison low-variance.
    Rng rng(derive_seed(config.seed, "eval-latent"));
    std::normal_distribution<double> normal(0.0, 1.0);
    latent.resize(config.eval_samples, config.latent_dim);
    for (Eigen::Index k = 0; k < latent.size(); ++k) latent.data()[k] = normal(rng);
    labels.resize(static_cast<std::size_t>(config.eval_samples));
    for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = static_cast<int>(k % static_cast<std::size_t>(classes));
  }

  HistoryEntry evaluate(const MlpParams& generator, int classes, long iteration) const {
    const Matrix x = predict(generator, generator_input(latent, labels, classes));
    HistoryEntry e;
    e.iteration = iteration;
    e.fid = frechet_distance(overall, fit_moments(x));
    double total = 0.0;
    int present = 0;
    for (int cls = 0; cls < classes; ++cls) {
      if (!per_class[static_cast<std::size_t>(cls)]) continue;
      std::vector<Eigen::Index> rows;
      for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k] == cls) rows.push_back(static_cast<Eigen::Index>(k));
      if (rows.size() < 3) continue;
      Matrix pts(static_cast<Eigen::Index>(rows.size()), 2);
      for (std::size_t k = 0; k < rows.size(); ++k) pts.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
      total += frechet_distance(*per_class[static_cast<std::size_t>(cls)], fit_moments(pts));
      ++present;
    }
    e.intra_fid = present > 0 ? total / present : std::numeric_limits<double>::quiet_NaN();
    e.gan_test = mixture ? rgan::gan_test(x, labels, *mixture) : std::numeric_limits<double>::quiet_NaN();
    e.gan_train = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
};

}  // namespace

TrainedModel train(const GanConfig& config, const LabeledDataset& data, const TransitionMatrix& model_transition,
                   const TrainOptions& options) {
  config.validate();
  require(data.has_noisy_labels(), "training data must carry noisy labels");
  require(data.size() >= 1 && data.points.cols() == kDataDim, "training data must be non-empty n x 2");
  const int classes = model_transition.classes();
  data.validate(classes);

  TrainedModel model;
  model.config = config;
  model.classes = classes;
  model.model_transition = model_transition;
  model.generator = make_generator(config, classes, kDataDim, derive_seed(config.seed, "generator-init"));
  model.critic = make_critic(config, classes, kDataDim, derive_seed(config.seed, "critic-init"));
  if (uses_transition(config.variant) && !std::isfinite(condition_number(model_transition))) {
    model.warnings.push_back("model-side transition matrix is singular; clean-label recovery is not guaranteed");
  }
  if (config.iterations == 0) return model;

  const auto& noisy = *data.noisy_labels;
  AdamState g_opt = AdamState::for_params(model.generator, config.adam);
  CriticOptimizer d_opt(model.critic, config.adam);

  Rng rng(derive_seed(config.seed, "training"));
  Rng resample_rng(derive_seed(config.seed, "resampling"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_real(0, data.size() - 1);
  std::uniform_int_distribution<int> pick_label(0, classes - 1);

  const auto batch = static_cast<std::size_t>(config.batch_size);
  const bool conditional = has_conditional_discriminator(config.variant);
  const bool robust_resample = config.variant == Variant::rcgan;

  Matrix x_real(static_cast<Eigen::Index>(batch), kDataDim);
  std::vector<int> y_real(batch), y_gen(batch), y_disc(batch);
  Matrix latent(static_cast<Eigen::Index>(batch), config.latent_dim);

  auto draw_generator_batch = [&]() {
    for (Eigen::Index k = 0; k < latent.size(); ++k) latent.data()[k] = normal(rng);
    for (auto& y : y_gen) y = pick_label(rng);
    if (robust_resample) {
      corrupt_labels_into(y_gen, model_transition, resample_rng, y_disc);
    } else {
      y_disc = y_gen;
    }
  };
  const std::span<const int> no_labels;

  SnapshotEvaluator evaluator(data, classes, config, options.mixture);
  double best_fid = std::numeric_limits<double>::infinity();
  MlpParams best_generator = model.generator;
  Critic best_critic = model.critic;
  long best_iteration = 0;

  for (long iter = 1; iter <= config.iterations; ++iter) {
    StepRecord record;
    record.iteration = iter;
    // Discriminator (and classifier / Q heads).
    for (int inner = 0; inner < config.n_dis; ++inner) {
      for (std::size_t k = 0; k < batch; ++k) {
        const std::size_t idx = pick_real(rng);
        x_real.row(static_cast<Eigen::Index>(k)) = data.points.row(static_cast<Eigen::Index>(idx));
        y_real[k] = noisy[idx];
      }
      draw_generator_batch();
      const Matrix x_fake = predict(model.generator, generator_input(latent, y_gen, classes));

      const CriticOutput real_out =
          critic_forward(model.critic, config, x_real, conditional ? std::span<const int>(y_real) : no_labels, classes);
      const CriticOutput fake_out =
          critic_forward(model.critic, config, x_fake, conditional ? std::span<const int>(y_disc) : no_labels, classes);
      const AdversarialLoss adv = loss_gan(as_span(real_out.scores), as_span(fake_out.scores));
      double total = adv.discriminator;

      Matrix real_class_grad, fake_q_grad;
      if (model.critic.c_head) {
        const ClassificationLoss cls = config.variant == Variant::racgan
                                           ? loss_rac_real(real_out.class_probabilities, y_real, model_transition)
                                           : loss_ac_real(real_out.class_probabilities, y_real);
        total += config.lambda_ac_real * cls.value;
        real_class_grad =
            config.lambda_ac_real * softmax_backward(real_out.class_probabilities, cls.probability_grad);
      }
      if (model.critic.q_head) {
        const ClassificationLoss mi = loss_mi(fake_out.q_probabilities, y_gen);
        total += config.lambda_mi_q * mi.value;
        fake_q_grad = config.lambda_mi_q * softmax_backward(fake_out.q_probabilities, mi.probability_grad);
      }
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "non-finite discriminator loss at iteration " << iter << " (adversarial " << adv.discriminator << ")";
        throw NumericError(msg.str());
      }
      CriticGradients grads = critic_backward(model.critic, real_out, adv.real_grad, real_class_grad, Matrix());
      accumulate(grads, critic_backward(model.critic, fake_out, adv.fake_grad, Matrix(), fake_q_grad));
      d_opt.step(model.critic, grads);
      record.discriminator_loss = total;
    }

    // Generator.
    draw_generator_batch();
    const Matrix g_in = generator_input(latent, y_gen, classes);
    const ForwardResult g_fwd = forward(model.generator, g_in);
    const CriticOutput out =
        critic_forward(model.critic, config, g_fwd.output, conditional ? std::span<const int>(y_disc) : no_labels, classes);
    // Only the generator half of the adversarial loss is used here.
    const AdversarialLoss adv = loss_gan(as_span(out.scores), as_span(out.scores));
    const Vector& score_grad = adv.generator_grad;
    double total = adv.generator;
    Matrix class_grad, q_grad;
    if (model.critic.c_head) {
      const ClassificationLoss cls = loss_ac_gen(out.class_probabilities, y_gen);
      total += config.lambda_ac_gen * cls.value;
      class_grad = config.lambda_ac_gen * softmax_backward(out.class_probabilities, cls.probability_grad);
    }
    if (model.critic.q_head) {
      const ClassificationLoss mi = loss_mi(out.q_probabilities, y_gen);
      total += config.lambda_mi_gen * mi.value;
      q_grad = config.lambda_mi_gen * softmax_backward(out.q_probabilities, mi.probability_grad);
    }
    if (!std::isfinite(total)) {
      throw NumericError("non-finite generator loss at iteration " + std::to_string(iter));
    }
    const CriticGradients through = critic_backward(model.critic, out, score_grad, class_grad, q_grad);
    const BackwardResult g_back = backward(model.generator, g_fwd.cache, through.input);
    adam_step(model.generator, g_opt, g_back.params);
    record.generator_loss = total;
    if (options.on_step) options.on_step(record);

    if (iter % config.eval_interval == 0 || iter == config.iterations) {
      HistoryEntry entry = evaluator.evaluate(model.generator, classes, iter);
      if (!std::isfinite(entry.fid)) throw NumericError("non-finite FID at iteration " + std::to_string(iter));
      if (entry.fid < best_fid) {
        best_fid = entry.fid;
        best_generator = model.generator;
        best_critic = model.critic;
        best_iteration = iter;
      }
      model.history.push_back(entry);
    }
  }
  model.generator = std::move(best_generator);
  model.critic = std::move(best_critic);
  model.selected_iteration = best_iteration;
  return model;
}

Matrix sample_with_latent(const TrainedModel& model, const Matrix& latent, std::span<const int> labels) {
  for (int l : labels) require(l >= 0 && l < model.classes, "intended label out of range");
  require(latent.cols() == model.config.latent_dim, "latent width mismatch");
  if (labels.empty()) return Matrix(0, kDataDim);
  return predict(model.generator, generator_input(latent, labels, model.classes));
}

Matrix sample(const TrainedModel& model, std::span<const int> labels, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix latent(static_cast<Eigen::Index>(labels.size()), model.config.latent_dim);
  for (Eigen::Index k = 0; k < latent.size(); ++k) latent.data()[k] = normal(rng);
  return sample_with_latent(model, latent, labels);
}

std::string config_hash(const GanConfig& config) {
  nlohmann::json j = config;
  return fnv1a_hex(j.dump());
}

nlohmann::json model_to_json(const TrainedModel& model) {
  nlohmann::json critic{{"trunk", checkpoint_to_json(model.critic.trunk)},
                        {"d_head", checkpoint_to_json(model.critic.d_head)}};
  if (model.critic.c_head) critic["c_head"] = checkpoint_to_json(*model.critic.c_head);
  if (model.critic.q_head) critic["q_head"] = checkpoint_to_json(*model.critic.q_head);
  if (model.critic.embed) critic["embed"] = checkpoint_to_json(*model.critic.embed);
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : model.history) {
    history.push_back({h.iteration, h.fid, h.intra_fid, h.gan_test});
  }
  return {{"format", kModelFormat},
          {"variant", to_string(model.config.variant)},
          {"config", model.config},
          {"config_hash", config_hash(model.config)},
          {"classes", model.classes},
          {"model_T", model.model_transition},
          {"selected_iteration", model.selected_iteration},
          {"generator", checkpoint_to_json(model.generator)},
          {"critic", std::move(critic)},
          {"history", std::move(history)}};
}

TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string{}) != kModelFormat) {
      throw FormatError("model checkpoint: missing or unknown format tag");
    }
    TrainedModel m;
    m.config = gan_config_from_json(j.at("config"));
    if (j.at("config_hash").get<std::string>() != config_hash(m.config)) {
      throw FormatError("model checkpoint: config hash mismatch");
    }
    m.classes = j.at("classes").get<int>();
    m.model_transition = transition_from_json(j.at("model_T"));
    if (m.model_transition.classes() != m.classes) throw FormatError("model checkpoint: class count mismatch");
    m.selected_iteration = j.at("selected_iteration").get<long>();
    m.generator = checkpoint_from_json(j.at("generator"));
    const auto& c = j.at("critic");
    m.critic.trunk = checkpoint_from_json(c.at("trunk"));
    m.critic.d_head = checkpoint_from_json(c.at("d_head"));
    if (c.contains("c_head")) m.critic.c_head = checkpoint_from_json(c.at("c_head"));
    if (c.contains("q_head")) m.critic.q_head = checkpoint_from_json(c.at("q_head"));
    if (c.contains("embed")) m.critic.embed = checkpoint_from_json(c.at("embed"));
    if (m.generator.input_size() != m.config.latent_dim + m.classes || m.generator.output_size() != kDataDim) {
      throw FormatError("model checkpoint: generator shape does not match config");
    }
    for (const auto& h : j.at("history")) {
      HistoryEntry e;
      e.iteration = h.at(0).get<long>();
      auto num = [](const nlohmann::json& v) {
        return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
      };
      e.fid = num(h.at(1));
      e.intra_fid = num(h.at(2));
      e.gan_test = num(h.at(3));
      e.gan_train = std::numeric_limits<double>::quiet_NaN();
      m.history.push_back(e);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  }
}

std::string history_csv(const std::vector<HistoryEntry>& history) {
  std::ostringstream os;
  os.precision(10);
  os << kHistoryCsvHeader << '\n';
  for (const auto& h : history) {
    os << h.iteration << ',' << h.fid << ',' << h.intra_fid << ',' << h.gan_test << ',' << h.gan_train << '\n';
  }
  return os.str();
}

}  // namespace rgan
