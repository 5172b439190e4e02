#include "rgan/metrics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace rgan {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

GaussianMoments fit_moments(const Matrix& samples) {
  require(samples.cols() == 2, "moments expect n x 2 samples");
  require(samples.rows() >= 3, "moments need at least 3 samples");
  GaussianMoments m;
  m.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - m.mean.transpose();
  m.covariance = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
  return m;
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
  const double mean_term = (a.mean - b.mean).squaredNorm();
  // For 2x2 PSD C_a, C_b the product has real nonnegative eigenvalues l1, l2, and
  // Tr((C_a C_b)^{1/2}) = sqrt(l1) + sqrt(l2) = sqrt(tr + 2 sqrt(det)).
  const Eigen::Matrix2d product = a.covariance * b.covariance;
  const double det = std::max(product.determinant(), 0.0);
  const double tr = product.trace();
  const double root_trace = std::sqrt(std::max(tr + 2.0 * std::sqrt(det), 0.0));
  const double value = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * root_trace;
  return value < 0.0 ? 0.0 : value;
}

double fid(const Matrix& generated, const Matrix& real) {
  return frechet_distance(fit_moments(real), fit_moments(generated));
}

std::string to_string(LabelMode mode) { return mode == LabelMode::clean ? "clean" : "noisy"; }

namespace {

Matrix gather_rows(const Matrix& points, std::span<const int> labels, int cls) {
  std::vector<Eigen::Index> rows;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == cls) rows.push_back(static_cast<Eigen::Index>(k));
  }
  Matrix out(static_cast<Eigen::Index>(rows.size()), points.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = points.row(rows[k]);
  return out;
}

}  // namespace

IntraFid intra_fid(const Matrix& generated, std::span<const int> intended_labels, const LabeledDataset& real,
                   LabelMode mode, int classes) {
  require(static_cast<std::size_t>(generated.rows()) == intended_labels.size(), "label count mismatch");
  const auto& real_labels = real.labels(mode == LabelMode::noisy);
  IntraFid out;
  out.mode = mode;
  double total = 0.0;
  int present = 0;
  for (int cls = 0; cls < classes; ++cls) {
    const Matrix gen = gather_rows(generated, intended_labels, cls);
    const Matrix ref = gather_rows(real.points, real_labels, cls);
    if (gen.rows() < 3 || ref.rows() < 3) {
      out.per_class.emplace_back(std::nullopt);
      out.warnings.push_back("class " + std::to_string(cls) + " has fewer than 3 samples; skipped");
      continue;
    }
    const double value = fid(gen, ref);
    out.per_class.emplace_back(value);
    total += value;
    ++present;
  }
  out.mean = present > 0 ? total / present : std::nan("");
  return out;
}

double gan_test(const Matrix& generated, std::span<const int> intended_labels, const MixtureSpec& spec) {
  require(generated.rows() >= 1, "GAN-test needs at least one generated sample");
  require(static_cast<std::size_t>(generated.rows()) == intended_labels.size(), "label count mismatch");
  for (int l : intended_labels) require(l >= 0 && l < spec.classes(), "intended label out of range");
  return accuracy(bayes_posterior(spec, generated), intended_labels);
}

double gan_train(const Matrix& generated, std::span<const int> intended_labels, const LabeledDataset& real_test,
                 int classes, const GanTrainSettings& settings) {
  require(generated.rows() >= settings.classifier.batch_size, "GAN-train needs at least one batch of samples");
  require(settings.averaged_epochs >= 1 && settings.averaged_epochs <= settings.classifier.epochs,
          "averaged epochs must lie in [1, epochs]");
  const int first_counted = settings.classifier.epochs - settings.averaged_epochs;
  std::vector<double> scores;
  train_classifier(generated, intended_labels, classes, settings.classifier,
                   [&](int epoch, const MlpParams& params) {
                     if (epoch < first_counted) return;
                     scores.push_back(accuracy(softmax(predict(params, real_test.points)), real_test.clean_labels));
                   });
  require(!scores.empty(), "GAN-train produced no evaluation epochs");
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "Pearson inputs differ in length");
  require(xs.size() >= 2, "Pearson needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double dx = xs[k] - mx;
    const double dy = ys[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("correlation undefined for a constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

void to_json(nlohmann::json& j, const IntraFid& value) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& v : value.per_class) per.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  j = nlohmann::json{{"mode", to_string(value.mode)}, {"per_class", std::move(per)}, {"mean", value.mean}};
  if (!value.warnings.empty()) j["warnings"] = value.warnings;
}

void to_json(nlohmann::json& j, const MetricsReport& report) {
  j = nlohmann::json{{"fid", report.fid},
                     {"intra_fid", report.intra_fid_clean},
                     {"intra_fid_noisy", report.intra_fid_noisy},
                     {"gan_test", report.gan_test},
                     {"gan_train", report.gan_train},
                     {"generated_samples", report.generated_samples},
                     {"real_samples", report.real_samples},
                     {"seed", report.seed}};
}

std::string csv_row(const MetricsReport& report) {
  return format_double(report.fid) + ',' + format_double(report.intra_fid_clean.mean) + ',' +
         format_double(report.intra_fid_noisy.mean) + ',' + format_double(report.gan_test) + ',' +
         format_double(report.gan_train);
}

}  // namespace rgan
