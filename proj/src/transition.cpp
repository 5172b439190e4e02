#include "rgan/transition.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace rgan {

namespace {

constexpr double kRowSumTolerance = 1e-12;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

TransitionMatrix::TransitionMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  require(entries_.rows() >= 2, "transition matrix needs at least 2 classes");
  require(entries_.rows() == entries_.cols(), "transition matrix must be square");
  for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
      const double v = entries_(i, j);
      require(std::isfinite(v) && v >= 0.0 && v <= 1.0,
              "transition entry out of [0, 1] at row " + std::to_string(i));
      sum += v;
    }
    require(std::abs(sum - 1.0) <= kRowSumTolerance,
            "transition row " + std::to_string(i) + " does not sum to 1");
  }
}

TransitionMatrix TransitionMatrix::identity(int classes) {
  require(classes >= 2, "class count must be >= 2");
  return TransitionMatrix(Eigen::MatrixXd::Identity(classes, classes));
}

bool TransitionMatrix::is_identity() const {
  return entries_ == Eigen::MatrixXd::Identity(entries_.rows(), entries_.cols());
}

TransitionMatrix build_symmetric(int classes, double mu) {
  require(classes >= 2, "class count must be >= 2");
  require(mu >= 0.0 && mu <= 1.0, "noise rate must lie in [0, 1]");
  const double off = mu / classes;
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(classes, classes, off);
  t.diagonal().array() += 1.0 - mu;
  // Rows can drift by an ulp or two from 1; renormalize so the invariant holds exactly enough.
  for (int i = 0; i < classes; ++i) t.row(i) /= t.row(i).sum();
  return TransitionMatrix(std::move(t));
}

TransitionMatrix build_asymmetric(int classes, double mu, std::span<const LabelFlip> flips) {
  require(classes >= 2, "class count must be >= 2");
  require(mu >= 0.0 && mu <= 1.0, "noise rate must lie in [0, 1]");
  Eigen::MatrixXd t = Eigen::MatrixXd::Identity(classes, classes);
  std::vector<bool> seen(static_cast<std::size_t>(classes), false);
  for (const auto& flip : flips) {
    require(flip.source >= 0 && flip.source < classes && flip.target >= 0 && flip.target < classes,
            "flip class index out of range");
    require(flip.source != flip.target, "flip source equals target");
    require(!seen[static_cast<std::size_t>(flip.source)],
            "class " + std::to_string(flip.source) + " flipped more than once");
    seen[static_cast<std::size_t>(flip.source)] = true;
    t(flip.source, flip.source) = 1.0 - mu;
    t(flip.source, flip.target) = mu;
  }
  return TransitionMatrix(std::move(t));
}

void corrupt_labels_into(std::span<const int> labels, const TransitionMatrix& transition, Rng& rng,
                         std::span<int> out) {
  require(out.size() == labels.size(), "output span size mismatch");
  const int c = transition.classes();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int label = labels[n];
    require(label >= 0 && label < c, "label out of range: " + std::to_string(label));
    // Inverse-CDF draw over the row. One uniform per label regardless of T keeps
    // the stream aligned across channels.
    const double u = unit(rng);
    double cumulative = 0.0;
    int chosen = c - 1;
    for (int j = 0; j < c; ++j) {
      cumulative += transition(label, j);
      if (u < cumulative) {
        chosen = j;
        break;
      }
    }
    // Guard against the round-off tail landing on a zero-probability class.
    while (transition(label, chosen) == 0.0 && chosen > 0) --chosen;
    out[n] = chosen;
  }
}

std::vector<int> corrupt_labels(std::span<const int> labels, const TransitionMatrix& transition,
                                std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out(labels.size());
  corrupt_labels_into(labels, transition, rng, out);
  return out;
}

double condition_number(const TransitionMatrix& transition) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(transition.entries());
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  if (smallest < kSingularThreshold) return std::numeric_limits<double>::infinity();
  return s(0) / smallest;
}

JointTable::JointTable(Eigen::MatrixXd values, double sum_tolerance) : values_(std::move(values)) {
  require(values_.rows() >= 1, "joint table needs at least one support point");
  require(values_.cols() >= 2, "joint table needs at least 2 classes");
  require(values_.allFinite(), "joint table has non-finite entries");
  require(values_.minCoeff() >= 0.0, "joint table has negative entries");
  require(std::abs(values_.sum() - 1.0) <= sum_tolerance, "joint table mass does not sum to 1");
}

JointTable push_forward(const JointTable& clean, const TransitionMatrix& transition) {
  require(clean.classes() == transition.classes(), "class count mismatch between table and channel");
  // Row form of T^T p: (T^T p)^T = p^T T.
  Eigen::MatrixXd noisy = clean.values() * transition.entries();
  // Tiny negative round-off cannot occur (all products nonnegative), but the total
  // can drift by a few ulps.
  return JointTable(std::move(noisy), 1e-12);
}

RecoveredTable recover_clean(const JointTable& noisy, const TransitionMatrix& transition) {
  require(noisy.classes() == transition.classes(), "class count mismatch between table and channel");
  if (!std::isfinite(condition_number(transition))) {
    throw SingularityError(
        "transition matrix is singular; clean joint is not identifiable from the noisy joint");
  }
  // Solve p^T T = q^T for each row, i.e. T^T p = q.
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(transition.entries().transpose());
  RecoveredTable out;
  out.values = lu.solve(noisy.values().transpose()).transpose();
  for (Eigen::Index k = 0; k < out.values.rows(); ++k) {
    const double lo = out.values.row(k).minCoeff();
    const double hi = out.values.row(k).maxCoeff();
    if (lo < -1e-9 || hi > 1.0 + 1e-9) {
      out.infeasible = true;
      std::ostringstream msg;
      msg << "support point " << k << " recovers to entries in [" << lo << ", " << hi
          << "]; the channel is likely misspecified";
      out.warnings.push_back(msg.str());
    }
  }
  return out;
}

JointTable RecoveredTable::as_table(double sum_tolerance) const {
  if (infeasible) throw std::domain_error("recovered table is infeasible: " + warnings.front());
  return JointTable(values.cwiseMax(0.0), sum_tolerance);
}

void to_json(nlohmann::json& j, const TransitionMatrix& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < t.classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < t.classes(); ++k) row.push_back(t(i, k));
    rows.push_back(std::move(row));
  }
  j = nlohmann::json{{"c", t.classes()}, {"entries", std::move(rows)}};
}

TransitionMatrix transition_from_json(const nlohmann::json& j) {
  try {
    const int c = j.at("c").get<int>();
    const auto& rows = j.at("entries");
    if (!rows.is_array() || static_cast<int>(rows.size()) != c) {
      throw std::invalid_argument("transition JSON: entries must have c rows");
    }
    Eigen::MatrixXd m(c, c);
    for (int i = 0; i < c; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (!row.is_array() || static_cast<int>(row.size()) != c) {
        throw std::invalid_argument("transition JSON: each row must have c entries");
      }
      for (int k = 0; k < c; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    return TransitionMatrix(std::move(m));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("transition JSON: ") + e.what());
  }
}

}  // namespace rgan
