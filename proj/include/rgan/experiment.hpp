#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgan/estimation.hpp"
#include "rgan/ganmodels.hpp"
#include "rgan/metrics.hpp"
#include "rgan/synthdata.hpp"
#include "rgan/transition.hpp"

namespace rgan {

struct DataRecipe {
  int classes = 5;
  double radius = 2.0;
  double sigma = 0.25;
  std::size_t n_train = 50000;
  std::size_t n_test = 10000;
};

enum class NoiseType { symmetric, asymmetric };

std::string to_string(NoiseType t);
NoiseType noise_type_from_string(const std::string& name);

struct NoiseRecipe {
  NoiseType type = NoiseType::symmetric;
  double mu_r = 0.0;
  /// Asymmetric only; empty means class i flips to (i + 1) mod c.
  std::vector<LabelFlip> flips;
};

enum class ModelNoiseMode { identity, known, estimated, explicit_rate };

std::string to_string(ModelNoiseMode m);
ModelNoiseMode model_noise_mode_from_string(const std::string& name);

struct ModelNoiseRecipe {
  ModelNoiseMode mode = ModelNoiseMode::known;
  /// Noise rate of the model-side T for mode explicit_rate, same family as the real noise.
  double mu_g = 0.0;
  /// Anchor percentile for mode estimated; nullopt picks the family default.
  std::optional<double> percentile;
  /// Noisy classifier for mode estimated (seed is derived per run).
  ClassifierSettings classifier = EstimationConfig{}.classifier;
};

struct MetricSchedule {
  /// Generated points for FID, Intra FID and GAN-test (labels cycle over classes).
  std::size_t samples = 50000;
  /// Leading subset of the generated points used to train the GAN-train classifier.
  std::size_t gan_train_samples = 10000;
  GanTrainSettings gan_train;
};

struct ExperimentSpec {
  DataRecipe data;
  NoiseRecipe noise;
  ModelNoiseRecipe model_noise;
  /// `gan.seed` is ignored: each root seed derives its own.
  GanConfig gan;
  /// Empty means {gan.variant}.
  std::vector<Variant> variants;
  MetricSchedule metrics;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir;

  std::vector<Variant> effective_variants() const;
  void validate() const;
};

nlohmann::json spec_to_json(const ExperimentSpec& spec);
/// Missing keys keep defaults; unknown keys are rejected with std::invalid_argument.
ExperimentSpec spec_from_json(const nlohmann::json& j);

/// Hash over every semantic field; seeds and output_dir are excluded.
std::string spec_hash(const ExperimentSpec& spec);

/// Sets a scalar at a dotted path ("noise.mu_r", "gan.variant") from its text form.
void set_spec_field(nlohmann::json& spec_json, const std::string& dotted_path, const std::string& text);

TransitionMatrix real_transition(const ExperimentSpec& spec);

struct CellMetrics {
  double fid = 0.0;
  double intra_fid = 0.0;
  double intra_fid_noisy = 0.0;
  double gan_test = 0.0;
  double gan_train = 0.0;
};

struct CellResult {
  std::uint64_t seed = 0;
  Variant variant = Variant::rcgan;
  bool ok = false;
  std::string error;
  CellMetrics metrics;
  std::optional<double> estimate_error;  // max |T' - T| when T' was estimated
  bool cached = false;
};

struct RunResult {
  std::string hash;
  std::filesystem::path directory;
  std::vector<CellResult> cells;  // seed-major, then variant order
  bool any_aborted() const;
};

struct RunOptions {
  /// Empty falls back to spec.output_dir, then $RGAN_OUT, then "rgan-out".
  std::filesystem::path output_root;
  int jobs = 1;
  /// Progress lines; may be called from worker threads (serialized by the runner).
  std::function<void(const std::string&)> log;
};

std::filesystem::path resolve_output_root(const ExperimentSpec& spec, const std::filesystem::path& override_root);

/// Trains and evaluates every (seed, variant) cell, writing
/// <root>/<hash>/seed-<s>/<variant>/{report.json,history.csv,model.json} and
/// <root>/<hash>/metrics.csv. Cells with an existing report are loaded, not rerun.
RunResult run(const ExperimentSpec& spec, const RunOptions& options = {});

struct SweepResult {
  std::filesystem::path csv_path;
  std::filesystem::path summary_path;
  std::string csv;
  nlohmann::json summary;
  bool any_aborted = false;
};

/// Runs the template once per axis value and aggregates a long-format CSV plus
/// a Pearson(value, gan_train) summary per variant.
SweepResult sweep(const ExperimentSpec& templ, const std::string& axis, const std::vector<std::string>& values,
                  const RunOptions& options = {});

inline constexpr const char* kSweepCsvHeader = "axis,value,seed,variant,fid,intra_fid,gan_test,gan_train,status";
inline constexpr const char* kSamplesCsvHeader = "z_index,intended_label,x1,x2";

/// `per_class` latent rows shared across all labels; rows ordered by z then label.
std::string export_samples(const TrainedModel& model, std::size_t per_class, std::uint64_t seed);

/// Writes via a temporary file in the same directory and renames into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Per-variant mean and sample standard deviation of each metric over the
/// reports found under a run directory, as CSV `variant,metric,mean,std,n`.
std::string summarize_run(const std::filesystem::path& run_directory);

}  // namespace rgan
