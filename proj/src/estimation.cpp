#include "rgan/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rgan {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

constexpr double kNearSingularCondition = 1e6;

}  // namespace

void EstimationConfig::validate() const {
  require(percentile > 0.0 && percentile <= 100.0, "anchor percentile must lie in (0, 100]");
}

double default_percentile(bool symmetric_noise) { return symmetric_noise ? 97.0 : 100.0; }

MlpParams train_noisy_classifier(const LabeledDataset& data, int classes, const ClassifierSettings& settings) {
  require(data.has_noisy_labels(), "noisy classifier needs noisy labels");
  data.validate(classes);
  return train_classifier(data.points, *data.noisy_labels, classes, settings);
}

ProbabilityModel as_probability_model(MlpParams classifier) {
  return [params = std::move(classifier)](const Matrix& x) { return softmax(predict(params, x)); };
}

TransitionEstimate estimate_T(const ProbabilityModel& classifier, const Matrix& pool, double percentile) {
  require(pool.rows() >= 1, "anchor pool must be non-empty");
  require(percentile > 0.0 && percentile <= 100.0, "anchor percentile must lie in (0, 100]");
  const Matrix probs = classifier(pool);
  require(probs.rows() == pool.rows() && probs.cols() >= 2, "classifier output has the wrong shape");
  const auto c = static_cast<int>(probs.cols());
  const auto n = static_cast<std::size_t>(pool.rows());
  // Nearest rank: the ceil(p/100 * n)-th smallest score (1-based).
  const auto rank = static_cast<std::size_t>(std::clamp<double>(std::ceil(percentile / 100.0 * static_cast<double>(n)), 1.0,
                                                                static_cast<double>(n)));

  TransitionEstimate out;
  Eigen::MatrixXd t(c, c);
  std::vector<Eigen::Index> order(n);
  for (int i = 0; i < c; ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Stable ordering by score, then row index, so ties resolve deterministically.
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(rank - 1), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) {
                       if (probs(a, i) != probs(b, i)) return probs(a, i) < probs(b, i);
                       return a < b;
                     });
    const Eigen::Index anchor = order[rank - 1];
    out.anchor_rows.push_back(anchor);
    out.anchor_confidence.push_back(probs(anchor, i));
    Eigen::RowVectorXd row = probs.row(anchor).cwiseMax(0.0);
    const double total = row.sum();
    require(total > 0.0, "classifier returned an all-zero row at the anchor");
    row /= total;
    t.row(i) = row;
  }
  // One more pass pins each row sum to 1 within round-off.
  for (int i = 0; i < c; ++i) t.row(i) /= t.row(i).sum();
  out.matrix = TransitionMatrix(std::move(t));
  out.condition_number = condition_number(out.matrix);
  out.near_singular = !std::isfinite(out.condition_number) || out.condition_number > kNearSingularCondition;
  return out;
}

double max_abs_difference(const TransitionMatrix& a, const TransitionMatrix& b) {
  require(a.classes() == b.classes(), "class count mismatch");
  return (a.entries() - b.entries()).cwiseAbs().maxCoeff();
}

nlohmann::json estimate_to_json(const TransitionEstimate& estimate, const TransitionMatrix* reference) {
  nlohmann::json j = estimate.matrix;
  std::vector<long long> rows(estimate.anchor_rows.begin(), estimate.anchor_rows.end());
  nlohmann::json diag{{"anchor_rows", rows},
                      {"anchor_confidence", estimate.anchor_confidence},
                      {"condition_number", std::isfinite(estimate.condition_number)
                                               ? nlohmann::json(estimate.condition_number)
                                               : nlohmann::json("inf")},
                      {"near_singular", estimate.near_singular}};
  if (reference) diag["max_abs_error"] = max_abs_difference(estimate.matrix, *reference);
  j["diagnostics"] = std::move(diag);
  return j;
}

}  // namespace rgan
