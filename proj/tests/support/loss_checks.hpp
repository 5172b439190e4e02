#pragma once

// Finite-difference checks of every training objective, end to end through the
// critic heads and the generator. Shared by the unit tests and the acceptance run.

#include <random>
#include <string>
#include <vector>

#include "rgan/ganmodels.hpp"

namespace rgan::testing {

struct LossCheck {
  std::string name;
  GradCheckReport report;
};

namespace detail {

enum class Part { trunk, d_head, c_head, q_head, embed };

inline MlpParams& part_of(Critic& c, Part p) {
  switch (p) {
    case Part::trunk: return c.trunk;
    case Part::d_head: return c.d_head;
    case Part::c_head: return *c.c_head;
    case Part::q_head: return *c.q_head;
    case Part::embed: return *c.embed;
  }
  return c.trunk;
}

inline const MlpGradients& part_of(const CriticGradients& g, Part p) {
  switch (p) {
    case Part::trunk: return g.trunk;
    case Part::d_head: return g.d_head;
    case Part::c_head: return *g.c_head;
    case Part::q_head: return *g.q_head;
    case Part::embed: return *g.embed;
  }
  return g.trunk;
}

inline Matrix normal_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = g(rng);
  return m;
}

inline void randomize_biases(MlpParams& p, Rng& rng) {
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& l : p.layers) {
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias(k) = g(rng);
  }
}

struct Fixture {
  GanConfig config;
  int classes = 3;
  Critic critic;
  MlpParams generator;
  TransitionMatrix transition = TransitionMatrix::identity(3);
  Matrix x_real, latent;
  std::vector<int> y_real, y_gen, y_disc;

  Fixture(Variant variant, Conditioning conditioning, bool improved, std::uint64_t seed) {
    config.variant = variant;
    config.conditioning = conditioning;
    config.improved = improved;
    config.hidden_width = 16;
    config.hidden_layers = 2;
    config.latent_dim = 4;
    Rng rng(seed);
    critic = make_critic(config, classes, 2, seed + 1);
    generator = make_generator(config, classes, 2, seed + 2);
    randomize_biases(critic.trunk, rng);
    randomize_biases(critic.d_head, rng);
    if (critic.c_head) randomize_biases(*critic.c_head, rng);
    if (critic.q_head) randomize_biases(*critic.q_head, rng);
    randomize_biases(generator, rng);
    Eigen::MatrixXd t(3, 3);
    t << 0.7, 0.2, 0.1, 0.15, 0.6, 0.25, 0.05, 0.3, 0.65;
    transition = TransitionMatrix(t);
    const int n = 6;
    x_real = normal_matrix(n, 2, rng) * 2.0;
    latent = normal_matrix(n, config.latent_dim, rng);
    std::uniform_int_distribution<int> lab(0, classes - 1);
    for (int k = 0; k < n; ++k) {
      y_real.push_back(lab(rng));
      y_gen.push_back(lab(rng));
    }
    y_disc = variant == Variant::rcgan ? resample_noisy_label(y_gen, transition, seed + 3) : y_gen;
  }

  bool conditional() const { return has_conditional_discriminator(config.variant); }
  std::span<const int> disc_labels(const std::vector<int>& y) const {
    return conditional() ? std::span<const int>(y) : std::span<const int>();
  }
  Matrix fake() const { return predict(generator, generator_input(latent, y_gen, classes)); }
};

inline Vector zeros(Eigen::Index n) { return Vector::Zero(n); }

inline LossAndGradient pack(double loss, const MlpGradients& g) { return {loss, g}; }

}  // namespace detail

enum class CriticObjective { adversarial, ac_real, rac_real, mi_q };
enum class GeneratorObjective { adversarial, ac_gen, mi_gen };

inline LossFunction critic_objective(const detail::Fixture& f, CriticObjective obj, detail::Part part) {
  return [&f, obj, part](const MlpParams& p) {
    Critic critic = f.critic;
    detail::part_of(critic, part) = p;
    const Eigen::Index n = f.x_real.rows();
    const int c = f.classes;
    const Matrix x_fake = f.fake();
    if (obj == CriticObjective::adversarial) {
      const CriticOutput real = critic_forward(critic, f.config, f.x_real, f.disc_labels(f.y_real), c);
      const CriticOutput fake = critic_forward(critic, f.config, x_fake, f.disc_labels(f.y_disc), c);
      std::span<const double> rs(real.scores.data(), static_cast<std::size_t>(n));
      std::span<const double> fs(fake.scores.data(), static_cast<std::size_t>(n));
      const AdversarialLoss adv = f.config.variant == Variant::rcgan   ? loss_rcgan(rs, fs)
                                  : f.config.variant == Variant::cgan ? loss_cgan(rs, fs)
                                                                      : loss_gan(rs, fs);
      MlpGradients g = detail::part_of(critic_backward(critic, real, adv.real_grad, Matrix(), Matrix()), part);
      add_scaled(g, detail::part_of(critic_backward(critic, fake, adv.fake_grad, Matrix(), Matrix()), part));
      return detail::pack(adv.discriminator, g);
    }
    if (obj == CriticObjective::mi_q) {
      const CriticOutput fake = critic_forward(critic, f.config, x_fake, f.disc_labels(f.y_disc), c);
      const ClassificationLoss mi = loss_mi(fake.q_probabilities, f.y_gen);
      const Matrix q_grad = softmax_backward(fake.q_probabilities, mi.probability_grad);
      return detail::pack(mi.value, detail::part_of(critic_backward(critic, fake, detail::zeros(n), Matrix(), q_grad), part));
    }
    const CriticOutput real = critic_forward(critic, f.config, f.x_real, f.disc_labels(f.y_real), c);
    const ClassificationLoss cls = obj == CriticObjective::rac_real
                                       ? loss_rac_real(real.class_probabilities, f.y_real, f.transition)
                                       : loss_ac_real(real.class_probabilities, f.y_real);
    const Matrix c_grad = softmax_backward(real.class_probabilities, cls.probability_grad);
    return detail::pack(cls.value, detail::part_of(critic_backward(critic, real, detail::zeros(n), c_grad, Matrix()), part));
  };
}

inline LossFunction generator_objective(const detail::Fixture& f, GeneratorObjective obj) {
  return [&f, obj](const MlpParams& gen) {
    const int c = f.classes;
    const ForwardResult g = forward(gen, generator_input(f.latent, f.y_gen, c));
    const CriticOutput out = critic_forward(f.critic, f.config, g.output, f.disc_labels(f.y_disc), c);
    const Eigen::Index n = out.scores.size();
    double loss = 0.0;
    Vector score_grad = detail::zeros(n);
    Matrix class_grad, q_grad;
    if (obj == GeneratorObjective::adversarial) {
      std::span<const double> s(out.scores.data(), static_cast<std::size_t>(n));
      const AdversarialLoss adv = loss_gan(s, s);
      loss = adv.generator;
      score_grad = adv.generator_grad;
    } else if (obj == GeneratorObjective::ac_gen) {
      const ClassificationLoss cls = loss_ac_gen(out.class_probabilities, f.y_gen);
      loss = cls.value;
      class_grad = softmax_backward(out.class_probabilities, cls.probability_grad);
    } else {
      const ClassificationLoss mi = loss_mi(out.q_probabilities, f.y_gen);
      loss = mi.value;
      q_grad = softmax_backward(out.q_probabilities, mi.probability_grad);
    }
    const CriticGradients through = critic_backward(f.critic, out, score_grad, class_grad, q_grad);
    return detail::pack(loss, backward(gen, g.cache, through.input).params);
  };
}

/// One report per (objective, parameter group); every group with >= 200
/// coordinates is subsampled, smaller groups are checked exhaustively.
inline std::vector<LossCheck> check_all_losses(double tolerance, std::uint64_t seed) {
  using detail::Fixture;
  using detail::Part;
  std::vector<LossCheck> out;
  auto run = [&](const std::string& name, const LossFunction& fn, const MlpParams& at) {
    out.push_back({name, grad_check(fn, at, tolerance, seed, 200, 1e-5)});
  };
  {
    const Fixture f(Variant::gan, Conditioning::concat, false, seed);
    run("adversarial/discriminator/trunk", critic_objective(f, CriticObjective::adversarial, Part::trunk), f.critic.trunk);
    run("adversarial/discriminator/head", critic_objective(f, CriticObjective::adversarial, Part::d_head), f.critic.d_head);
    run("adversarial/generator", generator_objective(f, GeneratorObjective::adversarial), f.generator);
  }
  {
    const Fixture f(Variant::acgan, Conditioning::concat, false, seed + 10);
    run("ac_real/trunk", critic_objective(f, CriticObjective::ac_real, Part::trunk), f.critic.trunk);
    run("ac_real/classifier_head", critic_objective(f, CriticObjective::ac_real, Part::c_head), *f.critic.c_head);
    run("ac_gen/generator", generator_objective(f, GeneratorObjective::ac_gen), f.generator);
  }
  {
    const Fixture f(Variant::racgan, Conditioning::concat, false, seed + 20);
    run("rac_real/trunk", critic_objective(f, CriticObjective::rac_real, Part::trunk), f.critic.trunk);
    run("rac_real/classifier_head", critic_objective(f, CriticObjective::rac_real, Part::c_head), *f.critic.c_head);
    run("rac_gen/generator", generator_objective(f, GeneratorObjective::ac_gen), f.generator);
  }
  for (Conditioning mode : {Conditioning::concat, Conditioning::projection}) {
    const std::string tag = mode == Conditioning::concat ? "concat" : "projection";
    for (Variant v : {Variant::cgan, Variant::rcgan}) {
      const Fixture f(v, mode, false, seed + 30 + static_cast<std::uint64_t>(v));
      const std::string base = to_string(v) + "/" + tag;
      run(base + "/discriminator/trunk", critic_objective(f, CriticObjective::adversarial, Part::trunk), f.critic.trunk);
      run(base + "/discriminator/head", critic_objective(f, CriticObjective::adversarial, Part::d_head), f.critic.d_head);
      if (f.critic.embed) {
        run(base + "/discriminator/embed", critic_objective(f, CriticObjective::adversarial, Part::embed), *f.critic.embed);
      }
      run(base + "/generator", generator_objective(f, GeneratorObjective::adversarial), f.generator);
    }
  }
  {
    const Fixture f(Variant::rcgan, Conditioning::concat, true, seed + 40);
    run("mi/q_head", critic_objective(f, CriticObjective::mi_q, Part::q_head), *f.critic.q_head);
    run("mi/trunk", critic_objective(f, CriticObjective::mi_q, Part::trunk), f.critic.trunk);
    run("mi/generator", generator_objective(f, GeneratorObjective::mi_gen), f.generator);
  }
  return out;
}

}  // namespace rgan::testing
