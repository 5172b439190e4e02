#include <cstdint>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rgan/experiment.hpp"
#include "rgan/oracle.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;

using Overrides = std::vector<std::pair<std::string, std::string>>;

bool is_field_flag(const std::string& name) {
  return name.find('.') != std::string::npos || name == "seeds" || name == "variants";
}

// Pulls "--a.b value" / "--a.b=value" field overrides out of argv before CLI11 sees it.
Overrides extract_overrides(int argc, char** argv, std::vector<std::string>& rest) {
  Overrides out;
  for (int i = 0; i < argc; ++i) {
    const std::string arg = argv[i];
    if (i > 0 && arg.rfind("--", 0) == 0) {
      const std::string body = arg.substr(2);
      const auto eq = body.find('=');
      const std::string name = body.substr(0, eq);
      if (is_field_flag(name)) {
        if (eq != std::string::npos) {
          out.emplace_back(name, body.substr(eq + 1));
        } else {
          if (i + 1 >= argc) throw std::invalid_argument("missing value for " + arg);
          out.emplace_back(name, argv[++i]);
        }
        continue;
      }
    }
    rest.push_back(arg);
  }
  return out;
}

rgan::ExperimentSpec load_spec(const std::string& path, const Overrides& overrides) {
  json j = path.empty() ? rgan::spec_to_json(rgan::ExperimentSpec{}) : json::parse(rgan::read_file(path));
  // Fill defaults so every field path is addressable.
  j = rgan::spec_to_json(rgan::spec_from_json(j));
  for (const auto& [field, value] : overrides) rgan::set_spec_field(j, field, value);
  return rgan::spec_from_json(j);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void log_line(const std::string& line) { std::cerr << line << '\n'; }

int cmd_run(const std::string& spec_path, const std::string& out, int jobs, const Overrides& extras) {
  const rgan::ExperimentSpec spec = load_spec(spec_path, extras);
  const rgan::RunResult result = rgan::run(spec, {out, jobs, log_line});
  std::cout << result.directory.string() << '\n';
  std::cout << rgan::read_file(result.directory / "metrics.csv");
  return result.any_aborted() ? kExitPartial : kExitOk;
}

int cmd_sweep(const std::string& spec_path, const std::string& axis, const std::string& values, const std::string& out,
              int jobs, const Overrides& extras) {
  const rgan::ExperimentSpec spec = load_spec(spec_path, extras);
  const rgan::SweepResult result = rgan::sweep(spec, axis, split_list(values), {out, jobs, log_line});
  std::cout << result.csv_path.string() << '\n' << result.csv << result.summary.dump(2) << '\n';
  return result.any_aborted ? kExitPartial : kExitOk;
}

int cmd_estimate(const std::string& spec_path, std::uint64_t seed, const Overrides& extras) {
  const rgan::ExperimentSpec spec = load_spec(spec_path, extras);
  const int c = spec.data.classes;
  const rgan::MixtureSpec mixture = rgan::make_ring_mixture(c, spec.data.radius, spec.data.sigma);
  rgan::LabeledDataset data = rgan::sample_dataset(mixture, spec.data.n_train, rgan::derive_seed(seed, "data"));
  const rgan::TransitionMatrix t_real = rgan::real_transition(spec);
  data.noisy_labels = rgan::corrupt_labels(data.clean_labels, t_real, rgan::derive_seed(seed, "corruption"));
  rgan::ClassifierSettings settings = spec.model_noise.classifier;
  settings.seed = rgan::derive_seed(seed, "estimation");
  const rgan::MlpParams classifier = rgan::train_noisy_classifier(data, c, settings);
  const double percentile = spec.model_noise.percentile.value_or(
      rgan::default_percentile(spec.noise.type == rgan::NoiseType::symmetric));
  const rgan::TransitionEstimate estimate =
      rgan::estimate_T(rgan::as_probability_model(classifier), data.points, percentile);
  std::cout << rgan::estimate_to_json(estimate, &t_real).dump(2) << '\n';
  return kExitOk;
}

int cmd_verify(int classes, int support, double mu, const std::string& transition_path, std::uint64_t seed,
               double tolerance) {
  const rgan::TransitionMatrix t = transition_path.empty()
                                       ? rgan::build_symmetric(classes, mu)
                                       : rgan::transition_from_json(json::parse(rgan::read_file(transition_path)));
  const int c = t.classes();
  rgan::Rng rng(seed);
  std::exponential_distribution<double> expo(1.0);
  Eigen::MatrixXd values(support, c);
  for (Eigen::Index k = 0; k < values.size(); ++k) values.data()[k] = expo(rng);
  values /= values.sum();
  const rgan::JointTable clean(values, 1e-10);

  json out{{"classes", c}, {"support", support}, {"transition", t}};
  bool passed = true;
  try {
    const rgan::Theorem1Report r1 = rgan::verify_theorem1(clean, t, tolerance);
    out["theorem1"] = r1;
    passed = passed && r1.passed;
  } catch (const rgan::SingularityError& e) {
    out["theorem1"] = {{"error", e.what()}};
    passed = false;
  }
  // Round trip: the generator joint is recovered from the real noisy joint.
  rgan::JointTable gen = clean;
  if (std::isfinite(rgan::condition_number(t))) {
    gen = rgan::recover_clean(rgan::push_forward(clean, t), t).as_table();
  }
  const rgan::Theorem2Report r2 = rgan::verify_theorem2(clean, gen, t, tolerance);
  out["theorem2"] = r2;
  passed = passed && r2.passed;
  std::cout << out.dump(2) << '\n';
  return passed ? kExitOk : kExitPartial;
}

int cmd_export(const std::string& model_path, std::size_t per_class, std::uint64_t seed, const std::string& output) {
  const rgan::TrainedModel model = rgan::model_from_json(json::parse(rgan::read_file(model_path)));
  const std::string csv = rgan::export_samples(model, per_class, seed);
  if (output.empty()) {
    std::cout << csv;
  } else {
    rgan::write_file_atomic(output, csv);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-noise robust conditional GAN experiments on synthetic 2-D mixtures"};
  app.require_subcommand(1);

  std::string spec_path, out, axis, values, transition_path, model_path, output, run_dir;
  int jobs = 1;
  std::uint64_t seed = 0;
  int classes = 3, support = 4;
  double mu = 0.3, tolerance = 1e-6;
  std::size_t per_class = 8;

  auto* run = app.add_subcommand("run", "Train and evaluate every (seed, variant) cell of a spec");
  run->add_option("spec", spec_path, "Experiment spec JSON (defaults when omitted)");
  run->add_option("--out", out, "Output root (overrides spec.output_dir and RGAN_OUT)");
  run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* sw = app.add_subcommand("sweep", "Run a spec template over values of one field");
  sw->add_option("spec", spec_path, "Experiment spec JSON template");
  sw->add_option("--axis", axis, "Dotted field path, e.g. noise.mu_r")->required();
  sw->add_option("--values", values, "Comma-separated values")->required();
  sw->add_option("--out", out, "Output root");
  sw->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* est = app.add_subcommand("estimate-t", "Estimate the transition matrix from noisy data");
  est->add_option("spec", spec_path, "Experiment spec JSON (data, noise, model_noise sections)");
  est->add_option("--seed", seed, "Root seed");

  auto* ver = app.add_subcommand("verify-theorems", "Check both theorems on a random finite joint");
  ver->add_option("--classes", classes, "Number of classes")->check(CLI::Range(2, 64));
  ver->add_option("--support", support, "Support size")->check(CLI::Range(1, 1024));
  ver->add_option("--mu", mu, "Symmetric noise rate")->check(CLI::Range(0.0, 1.0));
  ver->add_option("--transition", transition_path, "Transition matrix JSON {\"c\", \"entries\"}");
  ver->add_option("--seed", seed, "Seed for the random joint");
  ver->add_option("--tolerance", tolerance, "Tolerance")->check(CLI::PositiveNumber);

  auto* exp = app.add_subcommand("export-samples", "Dump samples on a shared latent grid");
  exp->add_option("model", model_path, "Model checkpoint JSON")->required();
  exp->add_option("--per-class", per_class, "Latent rows shared across labels")->check(CLI::PositiveNumber);
  exp->add_option("--seed", seed, "Latent seed");
  exp->add_option("--output", output, "Output CSV (stdout when omitted)");

  auto* rep = app.add_subcommand("report", "Summarize a run directory");
  rep->add_option("dir", run_dir, "Run directory <root>/<hash>")->required();

  Overrides overrides;
  std::vector<std::string> rest;
  try {
    overrides = extract_overrides(argc, argv, rest);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::vector<char*> args;
  for (auto& a : rest) args.push_back(a.data());
  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }
  if (!overrides.empty() && !(*run || *sw || *est)) {
    std::cerr << "error: field overrides apply to run, sweep and estimate-t only\n";
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(spec_path, out, jobs, overrides);
    if (*sw) return cmd_sweep(spec_path, axis, values, out, jobs, overrides);
    if (*est) return cmd_estimate(spec_path, seed, overrides);
    if (*ver) return cmd_verify(classes, support, mu, transition_path, seed, tolerance);
    if (*exp) return cmd_export(model_path, per_class, seed, output);
    if (*rep) {
      std::cout << rgan::summarize_run(run_dir);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
