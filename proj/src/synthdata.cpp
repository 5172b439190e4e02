#include "rgan/synthdata.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace rgan {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

void MixtureSpec::validate() const {
  require(classes() >= 2, "mixture needs at least 2 components");
  double total = 0.0;
  for (const auto& comp : components) {
    require(comp.prior >= 0.0, "negative class prior");
    total += comp.prior;
    require(comp.mean.allFinite(), "non-finite component mean");
    require((comp.covariance - comp.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
            "component covariance is not symmetric");
    Eigen::LLT<Eigen::Matrix2d> llt(comp.covariance);
    require(llt.info() == Eigen::Success, "component covariance is not positive definite");
  }
  require(std::abs(total - 1.0) <= 1e-12, "class priors do not sum to 1");
}

MixtureSpec make_ring_mixture(int classes, double radius, double sigma) {
  require(classes >= 2, "class count must be >= 2");
  require(radius > 0.0 && std::isfinite(radius), "radius must be positive");
  require(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
  MixtureSpec spec;
  std::ostringstream name;
  name << "ring(c=" << classes << ",radius=" << radius << ",sigma=" << sigma << ")";
  spec.layout = name.str();
  for (int i = 0; i < classes; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / classes;
    GaussianComponent comp;
    comp.mean = Eigen::Vector2d(radius * std::cos(angle), radius * std::sin(angle));
    comp.covariance = Eigen::Matrix2d::Identity() * sigma * sigma;
    comp.prior = 1.0 / classes;
    spec.components.push_back(comp);
  }
  return spec;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + name);
}

const std::vector<int>& LabeledDataset::labels(bool noisy) const {
  if (!noisy) return clean_labels;
  if (!noisy_labels) throw std::invalid_argument("dataset has no noisy labels");
  return *noisy_labels;
}

void LabeledDataset::validate(int classes) const {
  require(points.cols() == 2, "points must be n x 2");
  require(static_cast<std::size_t>(points.rows()) == clean_labels.size(),
          "points and clean labels differ in length");
  auto in_range = [classes](const std::vector<int>& ls) {
    for (int l : ls)
      if (l < 0 || l >= classes) return false;
    return true;
  };
  require(in_range(clean_labels), "clean label out of range");
  if (noisy_labels) {
    require(noisy_labels->size() == clean_labels.size(), "noisy and clean labels differ in length");
    require(in_range(*noisy_labels), "noisy label out of range");
  }
}

LabeledDataset sample_dataset(const MixtureSpec& spec, std::size_t n, std::uint64_t seed,
                              Split split) {
  require(n >= 1, "sample count must be >= 1");
  spec.validate();
  Rng rng(seed);
  std::vector<double> priors;
  std::vector<Eigen::Matrix2d> factors;
  for (const auto& comp : spec.components) {
    priors.push_back(comp.prior);
    factors.push_back(Eigen::LLT<Eigen::Matrix2d>(comp.covariance).matrixL());
  }
  std::discrete_distribution<int> pick(priors.begin(), priors.end());
  std::normal_distribution<double> normal(0.0, 1.0);

  LabeledDataset data;
  data.split = split;
  data.points.resize(static_cast<Eigen::Index>(n), 2);
  data.clean_labels.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const int label = pick(rng);
    Eigen::Vector2d z;
    z(0) = normal(rng);
    z(1) = normal(rng);
    const Eigen::Vector2d x = spec.components[static_cast<std::size_t>(label)].mean +
                              factors[static_cast<std::size_t>(label)] * z;
    data.points.row(static_cast<Eigen::Index>(k)) = x.transpose();
    data.clean_labels[k] = label;
  }
  return data;
}

namespace {

struct ComponentTerms {
  Eigen::Vector2d mean;
  Eigen::Matrix2d whiten;  // L^-1 with cov = L L^T
  double log_weight = 0.0;  // log prior - 0.5 log det cov
};

std::vector<ComponentTerms> component_terms(const MixtureSpec& spec) {
  std::vector<ComponentTerms> terms;
  for (const auto& comp : spec.components) {
    ComponentTerms t;
    t.mean = comp.mean;
    if (comp.prior <= 0.0) {
      t.whiten.setZero();
      t.log_weight = -std::numeric_limits<double>::infinity();
    } else {
      Eigen::LLT<Eigen::Matrix2d> llt(comp.covariance);
      const Eigen::Matrix2d l = llt.matrixL();
      t.whiten = l.triangularView<Eigen::Lower>().solve(Eigen::Matrix2d::Identity());
      t.log_weight = std::log(comp.prior) - std::log(l(0, 0) * l(1, 1));
    }
    terms.push_back(t);
  }
  return terms;
}

Vector posterior_from_terms(const std::vector<ComponentTerms>& terms, const Eigen::Vector2d& x) {
  const auto c = static_cast<Eigen::Index>(terms.size());
  Vector log_joint(c);
  for (Eigen::Index i = 0; i < c; ++i) {
    const auto& t = terms[static_cast<std::size_t>(i)];
    log_joint(i) = std::isinf(t.log_weight) ? t.log_weight : t.log_weight - 0.5 * (t.whiten * (x - t.mean)).squaredNorm();
  }
  // Max subtraction keeps distant points finite.
  const double peak = log_joint.maxCoeff();
  Vector post = (log_joint.array() - peak).exp();
  post /= post.sum();
  return post;
}

}  // namespace

Vector bayes_posterior(const MixtureSpec& spec, const Eigen::Vector2d& x) {
  return posterior_from_terms(component_terms(spec), x);
}

Matrix bayes_posterior(const MixtureSpec& spec, const Matrix& points) {
  const auto terms = component_terms(spec);
  Matrix out(points.rows(), spec.classes());
  for (Eigen::Index k = 0; k < points.rows(); ++k) {
    out.row(k) = posterior_from_terms(terms, Eigen::Vector2d(points(k, 0), points(k, 1))).transpose();
  }
  return out;
}

void write_csv(std::ostream& os, const LabeledDataset& data) {
  os << "x1,x2,clean_label,noisy_label,split\n";
  const std::string split = to_string(data.split);
  std::ostringstream line;
  line.precision(17);
  for (std::size_t k = 0; k < data.size(); ++k) {
    line.str("");
    const auto row = static_cast<Eigen::Index>(k);
    line << data.points(row, 0) << ',' << data.points(row, 1) << ',' << data.clean_labels[k] << ',';
    if (data.noisy_labels) line << (*data.noisy_labels)[k];
    line << ',' << split << '\n';
    os << line.str();
  }
}

LabeledDataset read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "x1,x2,clean_label,noisy_label,split") {
    throw FormatError("dataset CSV: unexpected header");
  }
  std::vector<double> xs;
  LabeledDataset data;
  std::vector<int> noisy;
  bool any_noisy = false;
  bool any_missing = false;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() == 4 && line.back() == ',') fields.emplace_back();
    if (fields.size() != 5) throw FormatError("dataset CSV: bad field count on line " + std::to_string(line_no));
    try {
      xs.push_back(std::stod(fields[0]));
      xs.push_back(std::stod(fields[1]));
      data.clean_labels.push_back(std::stoi(fields[2]));
      if (fields[3].empty()) {
        any_missing = true;
        noisy.push_back(-1);
      } else {
        any_noisy = true;
        noisy.push_back(std::stoi(fields[3]));
      }
      data.split = split_from_string(fields[4]);
    } catch (const std::exception& e) {
      throw FormatError("dataset CSV: cannot parse line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (any_noisy && any_missing) throw FormatError("dataset CSV: noisy labels only partially present");
  const auto n = static_cast<Eigen::Index>(data.clean_labels.size());
  data.points = Eigen::Map<Matrix>(xs.data(), n, 2);
  if (any_noisy) data.noisy_labels = std::move(noisy);
  return data;
}

void to_json(nlohmann::json& j, const MixtureSpec& spec) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& comp : spec.components) {
    comps.push_back({{"mean", {comp.mean(0), comp.mean(1)}},
                     {"covariance",
                      {{comp.covariance(0, 0), comp.covariance(0, 1)},
                       {comp.covariance(1, 0), comp.covariance(1, 1)}}},
                     {"prior", comp.prior}});
  }
  j = nlohmann::json{{"layout", spec.layout}, {"c", spec.classes()}, {"components", std::move(comps)}};
}

MixtureSpec mixture_from_json(const nlohmann::json& j) {
  try {
    MixtureSpec spec;
    spec.layout = j.value("layout", std::string{});
    for (const auto& item : j.at("components")) {
      GaussianComponent comp;
      comp.mean = Eigen::Vector2d(item.at("mean").at(0).get<double>(), item.at("mean").at(1).get<double>());
      const auto& cov = item.at("covariance");
      comp.covariance << cov.at(0).at(0).get<double>(), cov.at(0).at(1).get<double>(),
          cov.at(1).at(0).get<double>(), cov.at(1).at(1).get<double>();
      comp.prior = item.at("prior").get<double>();
      spec.components.push_back(comp);
    }
    if (j.contains("c") && j.at("c").get<int>() != spec.classes()) {
      throw std::invalid_argument("mixture JSON: c disagrees with component count");
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("mixture JSON: ") + e.what());
  }
}

}  // namespace rgan
