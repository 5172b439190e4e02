#include "rgan/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rgan {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

bool activated(const MlpParams& p, std::size_t layer) {
  return layer + 1 < p.layers.size() || p.activate_output;
}

void apply_activation(Matrix& z, Activation a, double slope) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::leaky_relu: z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; }); break;
  }
}

// Multiplies `grad` in place by the activation derivative evaluated at `pre`.
void apply_activation_grad(Matrix& grad, const Matrix& pre, Activation a, double slope) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: grad = (pre.array() > 0.0).select(grad, 0.0); break;
    case Activation::leaky_relu: grad = (pre.array() > 0.0).select(grad, slope * grad); break;
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  throw std::invalid_argument("unknown activation: " + name);
}

std::vector<int> MlpParams::layer_sizes() const {
  std::vector<int> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(input_size());
  for (const auto& l : layers) sizes.push_back(static_cast<int>(l.weight.cols()));
  return sizes;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams out = *this;
  for (auto& l : out.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return out;
}

bool MlpParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(),
                     [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
}

double& MlpParams::coordinate(std::size_t index) {
  for (auto& l : layers) {
    const auto w = static_cast<std::size_t>(l.weight.size());
    if (index < w) return l.weight.data()[index];
    index -= w;
    const auto b = static_cast<std::size_t>(l.bias.size());
    if (index < b) return l.bias.data()[index];
    index -= b;
  }
  throw std::out_of_range("parameter coordinate out of range");
}

double MlpParams::coordinate(std::size_t index) const {
  return const_cast<MlpParams&>(*this).coordinate(index);
}

MlpParams mlp_init(std::span<const int> layer_sizes, Activation hidden_activation, std::uint64_t seed,
                   bool activate_output) {
  require(layer_sizes.size() >= 2, "an MLP needs at least an input and an output size");
  for (int s : layer_sizes) require(s >= 1, "layer sizes must be >= 1");
  Rng rng(seed);
  MlpParams p;
  p.hidden_activation = hidden_activation;
  p.activate_output = activate_output;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(fan_in, fan_out);
    for (Eigen::Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] = dist(rng);
    layer.bias = RowVector::Zero(fan_out);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

ForwardResult forward(const MlpParams& params, const Matrix& batch) {
  require(!params.layers.empty(), "empty network");
  require(batch.cols() == params.input_size(),
          "batch width " + std::to_string(batch.cols()) + " does not match input size " +
              std::to_string(params.input_size()));
  ForwardResult out;
  out.cache.inputs.reserve(params.layers.size());
  out.cache.pre_activations.reserve(params.layers.size());
  Matrix current = batch;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix z = current * layer.weight;
    z.rowwise() += layer.bias;
    out.cache.inputs.push_back(std::move(current));
    current = z;
    if (activated(params, l)) apply_activation(current, params.hidden_activation, params.leaky_slope);
    out.cache.pre_activations.push_back(std::move(z));
  }
  out.output = std::move(current);
  return out;
}

Matrix predict(const MlpParams& params, const Matrix& batch) {
  require(!params.layers.empty(), "empty network");
  require(batch.cols() == params.input_size(), "batch width does not match input size");
  Matrix current = batch;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Matrix z = current * params.layers[l].weight;
    z.rowwise() += params.layers[l].bias;
    if (activated(params, l)) apply_activation(z, params.hidden_activation, params.leaky_slope);
    current = std::move(z);
  }
  return current;
}

BackwardResult backward(const MlpParams& params, const ForwardCache& cache, const Matrix& output_grad) {
  require(cache.inputs.size() == params.layers.size() &&
              cache.pre_activations.size() == params.layers.size(),
          "cache does not match network depth");
  require(output_grad.cols() == params.output_size() &&
              output_grad.rows() == cache.pre_activations.back().rows(),
          "output gradient shape mismatch");
  BackwardResult out;
  out.params = params.zeros_like();
  Matrix grad = output_grad;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    if (activated(params, l)) {
      apply_activation_grad(grad, cache.pre_activations[l], params.hidden_activation, params.leaky_slope);
    }
    auto& g = out.params.layers[l];
    g.weight.noalias() = cache.inputs[l].transpose() * grad;
    g.bias = grad.colwise().sum();
    Matrix next = grad * params.layers[l].weight.transpose();
    grad = std::move(next);
  }
  out.input = std::move(grad);
  return out;
}

void add_scaled(MlpGradients& dst, const MlpGradients& src, double scale) {
  require(dst.layers.size() == src.layers.size(), "gradient layouts differ");
  for (std::size_t l = 0; l < dst.layers.size(); ++l) {
    dst.layers[l].weight += scale * src.layers[l].weight;
    dst.layers[l].bias += scale * src.layers[l].bias;
  }
}

AdamState AdamState::for_params(const MlpParams& params, const AdamSettings& settings) {
  AdamState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.settings = settings;
  return s;
}

void adam_step(MlpParams& params, AdamState& state, const MlpGradients& gradients) {
  require(gradients.layers.size() == params.layers.size() &&
              state.first_moment.layers.size() == params.layers.size(),
          "optimizer shapes do not match parameters");
  for (std::size_t l = 0; l < gradients.layers.size(); ++l) {
    const auto& g = gradients.layers[l];
    require(g.weight.rows() == params.layers[l].weight.rows() &&
                g.weight.cols() == params.layers[l].weight.cols() &&
                g.bias.size() == params.layers[l].bias.size(),
            "gradient shape mismatch at layer " + std::to_string(l));
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw NumericError("non-finite gradient in layer " + std::to_string(l));
    }
  }
  const auto& s = state.settings;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseAbs2();
    theta.array() -= s.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    auto& m = state.first_moment.layers[l];
    auto& v = state.second_moment.layers[l];
    const auto& g = gradients.layers[l];
    update(p.weight, m.weight, v.weight, g.weight);
    update(p.bias, m.bias, v.bias, g.bias);
  }
}

GradCheckReport grad_check(const LossFunction& loss, const MlpParams& params, double tolerance,
                           std::uint64_t seed, std::size_t coordinates, double step) {
  GradCheckReport report;
  report.tolerance = tolerance;
  const LossAndGradient base = loss(params);
  const std::size_t total = params.parameter_count();
  std::vector<std::size_t> picks(total);
  std::iota(picks.begin(), picks.end(), std::size_t{0});
  if (coordinates < total) {
    Rng rng(seed);
    std::shuffle(picks.begin(), picks.end(), rng);
    picks.resize(coordinates);
    std::sort(picks.begin(), picks.end());
  }
  MlpParams probe = params;
  for (std::size_t index : picks) {
    const double original = probe.coordinate(index);
    probe.coordinate(index) = original + step;
    const double up = loss(probe).loss;
    probe.coordinate(index) = original - step;
    const double down = loss(probe).loss;
    probe.coordinate(index) = original;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = base.gradient.coordinate(index);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel >= report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_coordinate = index;
      report.analytic_at_worst = analytic;
      report.numeric_at_worst = numeric;
    }
  }
  // Locate the layer of the worst coordinate.
  std::size_t offset = 0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    offset += static_cast<std::size_t>(params.layers[l].weight.size() + params.layers[l].bias.size());
    if (report.worst_coordinate < offset) {
      report.worst_layer = l;
      break;
    }
  }
  report.coordinates_checked = picks.size();
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

Matrix softmax(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double peak = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - peak).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix softmax_backward(const Matrix& probabilities, const Matrix& probability_grad) {
  // dL/dz_i = p_i (g_i - sum_j p_j g_j)
  const Vector inner = (probabilities.array() * probability_grad.array()).rowwise().sum();
  Matrix out = probability_grad;
  out.colwise() -= inner;
  return probabilities.cwiseProduct(out);
}

Matrix one_hot(std::span<const int> labels, int classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    require(labels[k] >= 0 && labels[k] < classes, "label out of range: " + std::to_string(labels[k]));
    out(static_cast<Eigen::Index>(k), labels[k]) = 1.0;
  }
  return out;
}

double accuracy(const Matrix& probabilities, std::span<const int> labels) {
  require(static_cast<std::size_t>(probabilities.rows()) == labels.size(), "label count mismatch");
  require(!labels.empty(), "accuracy of an empty set");
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < probabilities.cols(); ++k) {
      if (probabilities(r, k) > probabilities(r, best)) best = k;
    }
    if (best == labels[static_cast<std::size_t>(r)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

MlpParams train_classifier(const Matrix& points, std::span<const int> labels, int classes,
                           const ClassifierSettings& settings,
                           const std::function<void(int, const MlpParams&)>& on_epoch) {
  require(points.rows() >= 1, "classifier needs training data");
  require(static_cast<std::size_t>(points.rows()) == labels.size(), "label count mismatch");
  require(settings.batch_size >= 1 && settings.epochs >= 0, "invalid classifier settings");
  std::vector<int> sizes{static_cast<int>(points.cols())};
  sizes.insert(sizes.end(), settings.hidden.begin(), settings.hidden.end());
  sizes.push_back(classes);
  MlpParams params = mlp_init(sizes, settings.activation, derive_seed(settings.seed, "classifier-init"));
  AdamState adam = AdamState::for_params(params, settings.adam);
  Rng rng(derive_seed(settings.seed, "classifier-batches"));
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(settings.batch_size);
  long steps = 0;
  Matrix x;
  std::vector<int> y;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch) {
      if (settings.max_steps > 0 && steps >= settings.max_steps) break;
      const std::size_t count = std::min(batch, n - start);
      x.resize(static_cast<Eigen::Index>(count), points.cols());
      y.resize(count);
      for (std::size_t k = 0; k < count; ++k) {
        x.row(static_cast<Eigen::Index>(k)) = points.row(static_cast<Eigen::Index>(order[start + k]));
        y[k] = labels[order[start + k]];
      }
      auto fwd = forward(params, x);
      const Matrix probs = softmax(fwd.output);
      // Cross-entropy gradient w.r.t. logits: (p - onehot) / batch.
      Matrix grad = probs - one_hot(y, classes);
      grad /= static_cast<double>(count);
      double loss = 0.0;
      for (std::size_t k = 0; k < count; ++k) {
        loss -= std::log(std::max(probs(static_cast<Eigen::Index>(k), y[k]), 1e-300));
      }
      if (!std::isfinite(loss)) {
        throw NumericError("classifier loss is not finite at epoch " + std::to_string(epoch));
      }
      auto back = backward(params, fwd.cache, grad);
      adam_step(params, adam, back.params);
      ++steps;
    }
    if (on_epoch) on_epoch(epoch, params);
    if (settings.max_steps > 0 && steps >= settings.max_steps) break;
  }
  return params;
}

nlohmann::json checkpoint_to_json(const MlpParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    std::vector<double> w(l.weight.data(), l.weight.data() + l.weight.size());
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"weight", w}, {"bias", b}});
  }
  return {{"format", kCheckpointFormat},
          {"layer_sizes", params.layer_sizes()},
          {"hidden_activation", to_string(params.hidden_activation)},
          {"activate_output", params.activate_output},
          {"leaky_slope", params.leaky_slope},
          {"layers", std::move(layers)}};
}

MlpParams checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string{}) != kCheckpointFormat) {
      throw FormatError("checkpoint: missing or unknown format tag");
    }
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    const auto& layers = j.at("layers");
    if (sizes.size() < 2 || layers.size() + 1 != sizes.size()) {
      throw FormatError("checkpoint: layer manifest does not match layer list");
    }
    MlpParams p;
    p.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
    p.activate_output = j.at("activate_output").get<bool>();
    p.leaky_slope = j.at("leaky_slope").get<double>();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weight").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      const int in = sizes[l];
      const int out = sizes[l + 1];
      if (in < 1 || out < 1 || w.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(out) ||
          b.size() != static_cast<std::size_t>(out)) {
        throw FormatError("checkpoint: shape mismatch in layer " + std::to_string(l));
      }
      DenseLayer layer;
      layer.weight = Eigen::Map<const Matrix>(w.data(), in, out);
      layer.bias = Eigen::Map<const RowVector>(b.data(), out);
      p.layers.push_back(std::move(layer));
    }
    if (!p.all_finite()) throw FormatError("checkpoint: non-finite parameter values");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace rgan
