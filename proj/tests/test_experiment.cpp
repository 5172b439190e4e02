#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "rgan/experiment.hpp"

using namespace rgan;
namespace fs = std::filesystem;

namespace {

ExperimentSpec tiny_spec() {
  ExperimentSpec s;
  s.data.classes = 3;
  s.data.n_train = 1200;
  s.data.n_test = 600;
  s.noise.mu_r = 0.3;
  s.gan.iterations = 60;
  s.gan.eval_interval = 30;
  s.gan.eval_samples = 300;
  s.gan.hidden_width = 16;
  s.gan.hidden_layers = 2;
  s.variants = {Variant::cgan, Variant::rcgan};
  s.metrics.samples = 600;
  s.metrics.gan_train_samples = 300;
  s.metrics.gan_train.classifier.epochs = 2;
  s.metrics.gan_train.classifier.hidden = {16};
  s.metrics.gan_train.averaged_epochs = 1;
  s.seeds = {0, 1};
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("rgan-test-" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("spec json round trip and strictness") {
  const ExperimentSpec s = tiny_spec();
  const auto j = spec_to_json(s);
  CHECK(spec_to_json(spec_from_json(j)) == j);
  CHECK_FALSE(j.at("gan").contains("seed"));

  auto bad = j;
  bad["colour"] = 1;
  CHECK_THROWS_AS(spec_from_json(bad), std::invalid_argument);
  bad = j;
  bad["noise"]["rate"] = 0.1;
  CHECK_THROWS_AS(spec_from_json(bad), std::invalid_argument);
  bad = j;
  bad["gan"]["seed"] = 4;
  CHECK_THROWS_AS(spec_from_json(bad), std::invalid_argument);
  bad = j;
  bad["seeds"] = {1, 1};
  CHECK_THROWS_AS(spec_from_json(bad), std::invalid_argument);
  bad = j;
  bad["noise"]["mu_r"] = 1.5;
  CHECK_THROWS_AS(spec_from_json(bad), std::invalid_argument);
  bad = j;
  bad["metrics"]["samples"] = 5;
  CHECK_THROWS_AS(spec_from_json(bad), std::invalid_argument);

  // Missing keys keep defaults.
  const auto defaults = spec_from_json(nlohmann::json::object());
  CHECK(defaults.data.classes == 5);
  CHECK(defaults.effective_variants().size() == 1);

  const auto single = spec_from_json(nlohmann::json{{"variants", {"racgan"}}});
  CHECK(single.gan.variant == Variant::racgan);
}

TEST_CASE("spec hash tracks semantic fields only") {
  const ExperimentSpec s = tiny_spec();
  const std::string h = spec_hash(s);
  CHECK(h == spec_hash(tiny_spec()));
  auto t = s;
  t.seeds = {7};
  t.output_dir = "/elsewhere";
  CHECK(spec_hash(t) == h);
  t = s;
  t.noise.mu_r = 0.31;
  CHECK(spec_hash(t) != h);
  t = s;
  t.gan.iterations = 61;
  CHECK(spec_hash(t) != h);
  t = s;
  t.model_noise.mode = ModelNoiseMode::estimated;
  CHECK(spec_hash(t) != h);
  t = s;
  t.variants = {Variant::rcgan, Variant::cgan};
  CHECK(spec_hash(t) != h);
}

TEST_CASE("field overrides") {
  auto j = spec_to_json(tiny_spec());
  set_spec_field(j, "noise.mu_r", "0.45");
  set_spec_field(j, "gan.iterations", "10");
  set_spec_field(j, "gan.improved", "true");
  set_spec_field(j, "seeds", "3,4,5");
  set_spec_field(j, "model_noise.percentile", "90");
  set_spec_field(j, "gan.variant", "acgan");
  const auto s = spec_from_json(j);
  CHECK(s.noise.mu_r == 0.45);
  CHECK(s.gan.iterations == 10);
  CHECK(s.gan.improved);
  CHECK(s.seeds == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(s.model_noise.percentile == 90.0);
  CHECK(s.gan.variant == Variant::acgan);
  CHECK(s.effective_variants() == std::vector<Variant>{Variant::acgan});

  set_spec_field(j, "variants", "cgan,rcgan");
  CHECK(spec_from_json(j).effective_variants().size() == 2);

  CHECK_THROWS_AS(set_spec_field(j, "noise.nope", "1"), std::invalid_argument);
  CHECK_THROWS_AS(set_spec_field(j, "noise.mu_r", "abc"), std::invalid_argument);
  CHECK_THROWS_AS(set_spec_field(j, "noise.mu_r", "0.1x"), std::invalid_argument);
  CHECK_THROWS_AS(set_spec_field(j, "gan.improved", "yes"), std::invalid_argument);
  CHECK_THROWS_AS(set_spec_field(j, "data", "1"), std::invalid_argument);
}

TEST_CASE("real transition and output root") {
  auto s = tiny_spec();
  s.noise.type = NoiseType::asymmetric;
  s.noise.mu_r = 0.4;
  const auto t = real_transition(s);
  CHECK(t(0, 1) == doctest::Approx(0.4));
  CHECK(t(2, 0) == doctest::Approx(0.4));
  CHECK(t(1, 1) == doctest::Approx(0.6));

  s.output_dir = "from-spec";
  CHECK(resolve_output_root(s, "explicit") == fs::path("explicit"));
  CHECK(resolve_output_root(s, {}) == fs::path("from-spec"));
  s.output_dir.clear();
  ::setenv("RGAN_OUT", "from-env", 1);
  CHECK(resolve_output_root(s, {}) == fs::path("from-env"));
  ::unsetenv("RGAN_OUT");
  CHECK(resolve_output_root(s, {}) == fs::path("rgan-out"));
}

TEST_CASE("sweep argument errors") {
  TempDir dir("sweep-errors");
  CHECK_THROWS_AS(sweep(tiny_spec(), "noise.mu_r", {}, {dir.path}), std::invalid_argument);
  CHECK_THROWS_AS(sweep(tiny_spec(), "seeds", {"1"}, {dir.path}), std::invalid_argument);
  CHECK_THROWS_AS(sweep(tiny_spec(), "noise.bogus", {"1"}, {dir.path}), std::invalid_argument);
  CHECK_FALSE(fs::exists(dir.path));
}

TEST_CASE("runs are cached and reproducible") {
  TempDir dir("run");
  const ExperimentSpec s = tiny_spec();
  const RunResult first = run(s, {dir.path / "a", 1, {}});
  REQUIRE(first.cells.size() == 4);
  CHECK_FALSE(first.any_aborted());
  CHECK(first.directory == dir.path / "a" / spec_hash(s));
  for (const auto& cell : first.cells) {
    CHECK(cell.ok);
    CHECK_FALSE(cell.cached);
    const fs::path cell_dir = first.directory / ("seed-" + std::to_string(cell.seed)) / to_string(cell.variant);
    CHECK(fs::exists(cell_dir / "report.json"));
    CHECK(fs::exists(cell_dir / "history.csv"));
    CHECK(fs::exists(cell_dir / "model.json"));
  }
  const std::string csv = read_file(first.directory / "metrics.csv");
  CHECK(csv.rfind("seed,variant,fid,intra_fid,intra_fid_noisy,gan_test,gan_train,status\n", 0) == 0);
  CHECK(count_lines(csv) == 5);
  CHECK(fs::exists(first.directory / "spec.json"));

  const RunResult again = run(s, {dir.path / "a", 1, {}});
  for (const auto& cell : again.cells) CHECK(cell.cached);
  CHECK(read_file(again.directory / "metrics.csv") == csv);

  // Recomputed from scratch, with a different worker count.
  const RunResult fresh = run(s, {dir.path / "b", 3, {}});
  for (const auto& cell : fresh.cells) CHECK_FALSE(cell.cached);
  CHECK(read_file(fresh.directory / "metrics.csv") == csv);

  const std::string summary = summarize_run(first.directory);
  CHECK(summary.rfind("variant,metric,mean,std,n\n", 0) == 0);
  CHECK(count_lines(summary) == 1 + 2 * 5);

  const auto model = model_from_json(nlohmann::json::parse(read_file(first.directory / "seed-0" / "rcgan" / "model.json")));
  const std::string samples = export_samples(model, 4, 9);
  CHECK(samples == export_samples(model, 4, 9));
  CHECK(samples != export_samples(model, 4, 10));
  CHECK(count_lines(samples) == 1 + 4 * 3);
  std::istringstream lines(samples);
  std::string line;
  std::getline(lines, line);
  CHECK(line == kSamplesCsvHeader);
  std::getline(lines, line);
  CHECK(line.rfind("0,0,", 0) == 0);
  std::getline(lines, line);
  CHECK(line.rfind("0,1,", 0) == 0);
  CHECK_THROWS_AS(export_samples(model, 0, 1), std::invalid_argument);
}

TEST_CASE("tiny sweep") {
  TempDir dir("sweep");
  auto s = tiny_spec();
  s.seeds = {0};
  const SweepResult r = sweep(s, "noise.mu_r", {"0.1", "0.5"}, {dir.path, 2, {}});
  CHECK_FALSE(r.any_aborted);
  CHECK(r.csv.rfind(std::string(kSweepCsvHeader) + "\n", 0) == 0);
  CHECK(count_lines(r.csv) == 1 + 2 * 2);
  CHECK(fs::exists(r.csv_path));
  CHECK(fs::exists(r.summary_path));
  CHECK(r.summary.at("pearson").contains("cgan"));
  CHECK(r.summary.at("pearson").contains("rcgan"));
  CHECK(r.summary.at("pearson").at("cgan").at("mean_gan_train").size() == 2);
  // Both runs are reused on a second call.
  const SweepResult again = sweep(s, "noise.mu_r", {"0.1", "0.5"}, {dir.path, 1, {}});
  CHECK(again.csv == r.csv);
}
