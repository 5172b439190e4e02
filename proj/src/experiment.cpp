#include "rgan/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace rgan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(allowed.count(key) > 0, "unknown key in " + where + ": " + key);
  }
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

json classifier_to_json(const ClassifierSettings& s) {
  return json{{"hidden", s.hidden},
              {"activation", to_string(s.activation)},
              {"lr", s.adam.learning_rate},
              {"beta1", s.adam.beta1},
              {"beta2", s.adam.beta2},
              {"epsilon", s.adam.epsilon},
              {"epochs", s.epochs},
              {"batch_size", s.batch_size},
              {"max_steps", s.max_steps}};
}

ClassifierSettings classifier_from_json(const json& j, ClassifierSettings s, const std::string& where) {
  check_keys(j, {"hidden", "activation", "lr", "beta1", "beta2", "epsilon", "epochs", "batch_size", "max_steps"},
             where);
  if (j.contains("hidden")) s.hidden = j["hidden"].get<std::vector<int>>();
  if (j.contains("activation")) s.activation = activation_from_string(j["activation"].get<std::string>());
  if (j.contains("lr")) s.adam.learning_rate = j["lr"].get<double>();
  if (j.contains("beta1")) s.adam.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) s.adam.beta2 = j["beta2"].get<double>();
  if (j.contains("epsilon")) s.adam.epsilon = j["epsilon"].get<double>();
  if (j.contains("epochs")) s.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) s.batch_size = j["batch_size"].get<int>();
  if (j.contains("max_steps")) s.max_steps = j["max_steps"].get<long>();
  for (int h : s.hidden) require(h >= 1, where + ": hidden widths must be positive");
  require(s.epochs >= 1 && s.batch_size >= 1, where + ": epochs and batch_size must be positive");
  return s;
}

std::string cell_name(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

std::string metrics_csv_row(const CellResult& cell) {
  if (!cell.ok) return "nan,nan,nan,nan,nan";
  const CellMetrics& m = cell.metrics;
  return format_number(m.fid) + ',' + format_number(m.intra_fid) + ',' + format_number(m.intra_fid_noisy) + ',' +
         format_number(m.gan_test) + ',' + format_number(m.gan_train);
}

json flat_metrics(const CellMetrics& m) {
  return json{{"fid", m.fid},
              {"intra_fid", m.intra_fid},
              {"intra_fid_noisy", m.intra_fid_noisy},
              {"gan_test", m.gan_test},
              {"gan_train", m.gan_train}};
}

double json_number(const json& j) {
  // NaN round-trips through JSON as null.
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::optional<CellResult> load_cached(const fs::path& report_path) {
  if (!fs::exists(report_path)) return std::nullopt;
  try {
    const json j = json::parse(read_file(report_path));
    if (j.value("status", "") != "ok") return std::nullopt;
    CellResult cell;
    cell.ok = true;
    cell.cached = true;
    const json& f = j.at("flat");
    cell.metrics = {json_number(f.at("fid")), json_number(f.at("intra_fid")), json_number(f.at("intra_fid_noisy")),
                    json_number(f.at("gan_test")), json_number(f.at("gan_train"))};
    if (j.contains("estimate") && j["estimate"]["diagnostics"].contains("max_abs_error")) {
      cell.estimate_error = j["estimate"]["diagnostics"]["max_abs_error"].get<double>();
    }
    return cell;
  } catch (const std::exception&) {
    // An unreadable report is recomputed.
    return std::nullopt;
  }
}

CellResult run_cell(const ExperimentSpec& spec, const std::string& hash, std::uint64_t seed, Variant variant,
                    const fs::path& dir) {
  CellResult cell;
  cell.seed = seed;
  cell.variant = variant;
  const int c = spec.data.classes;
  const MixtureSpec mixture = make_ring_mixture(c, spec.data.radius, spec.data.sigma);
  LabeledDataset train_set = sample_dataset(mixture, spec.data.n_train, derive_seed(seed, "data"), Split::train);
  LabeledDataset test_set = sample_dataset(mixture, spec.data.n_test, derive_seed(seed, "test-data"), Split::test);
  const TransitionMatrix t_real = real_transition(spec);
  train_set.noisy_labels = corrupt_labels(train_set.clean_labels, t_real, derive_seed(seed, "corruption"));
  test_set.noisy_labels = corrupt_labels(test_set.clean_labels, t_real, derive_seed(seed, "test-corruption"));

  json report{{"status", "ok"}, {"spec_hash", hash}, {"seed", seed}, {"variant", to_string(variant)}};
  TransitionMatrix t_model = TransitionMatrix::identity(c);
  if (uses_transition(variant)) {
    switch (spec.model_noise.mode) {
      case ModelNoiseMode::identity:
        break;
      case ModelNoiseMode::known:
        t_model = t_real;
        break;
      case ModelNoiseMode::explicit_rate: {
        ExperimentSpec swapped = spec;
        swapped.noise.mu_r = spec.model_noise.mu_g;
        t_model = real_transition(swapped);
        break;
      }
      case ModelNoiseMode::estimated: {
        ClassifierSettings settings = spec.model_noise.classifier;
        settings.seed = derive_seed(seed, "estimation");
        const MlpParams classifier = train_noisy_classifier(train_set, c, settings);
        const double percentile = spec.model_noise.percentile.value_or(
            default_percentile(spec.noise.type == NoiseType::symmetric));
        const TransitionEstimate estimate = estimate_T(as_probability_model(classifier), train_set.points, percentile);
        report["estimate"] = estimate_to_json(estimate, &t_real);
        cell.estimate_error = max_abs_difference(estimate.matrix, t_real);
        t_model = estimate.matrix;
        break;
      }
    }
  }

  GanConfig config = spec.gan;
  config.variant = variant;
  config.seed = derive_seed(seed, "gan");
  TrainOptions options;
  options.mixture = &mixture;
  const TrainedModel model = train(config, train_set, t_model, options);

  const auto n = spec.metrics.samples;
  std::vector<int> labels(n);
  for (std::size_t k = 0; k < n; ++k) labels[k] = static_cast<int>(k % static_cast<std::size_t>(c));
  const Matrix generated = sample(model, labels, derive_seed(seed, "metrics"));

  MetricsReport metrics;
  metrics.fid = fid(generated, train_set.points);
  metrics.intra_fid_clean = intra_fid(generated, labels, train_set, LabelMode::clean, c);
  metrics.intra_fid_noisy = intra_fid(generated, labels, train_set, LabelMode::noisy, c);
  metrics.gan_test = gan_test(generated, labels, mixture);
  const auto n_train_gen = static_cast<Eigen::Index>(std::min(n, spec.metrics.gan_train_samples));
  GanTrainSettings gt_settings = spec.metrics.gan_train;
  gt_settings.classifier.seed = derive_seed(seed, "gan-train");
  metrics.gan_train = gan_train(generated.topRows(n_train_gen),
                                std::span<const int>(labels.data(), static_cast<std::size_t>(n_train_gen)), test_set, c,
                                gt_settings);
  metrics.generated_samples = n;
  metrics.real_samples = train_set.size();
  metrics.seed = seed;

  cell.metrics = {metrics.fid, metrics.intra_fid_clean.mean, metrics.intra_fid_noisy.mean, metrics.gan_test,
                  metrics.gan_train};
  cell.ok = true;

  report["selected_iteration"] = model.selected_iteration;
  report["metrics"] = metrics;
  report["flat"] = flat_metrics(cell.metrics);
  report["real_transition"] = t_real;
  report["model_transition"] = t_model;
  report["warnings"] = model.warnings;

  fs::create_directories(dir);
  write_file_atomic(dir / "history.csv", history_csv(model.history));
  write_file_atomic(dir / "model.json", model_to_json(model).dump());
  write_file_atomic(dir / "report.json", report.dump(2) + "\n");
  return cell;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::string to_string(NoiseType t) { return t == NoiseType::symmetric ? "symmetric" : "asymmetric"; }

NoiseType noise_type_from_string(const std::string& name) {
  if (name == "symmetric") return NoiseType::symmetric;
  if (name == "asymmetric") return NoiseType::asymmetric;
  throw std::invalid_argument("unknown noise type: " + name);
}

std::string to_string(ModelNoiseMode m) {
  switch (m) {
    case ModelNoiseMode::identity: return "identity";
    case ModelNoiseMode::known: return "known";
    case ModelNoiseMode::estimated: return "estimated";
    case ModelNoiseMode::explicit_rate: return "explicit";
  }
  return "known";
}

ModelNoiseMode model_noise_mode_from_string(const std::string& name) {
  if (name == "identity") return ModelNoiseMode::identity;
  if (name == "known") return ModelNoiseMode::known;
  if (name == "estimated") return ModelNoiseMode::estimated;
  if (name == "explicit") return ModelNoiseMode::explicit_rate;
  throw std::invalid_argument("unknown model noise mode: " + name);
}

std::vector<Variant> ExperimentSpec::effective_variants() const {
  return variants.empty() ? std::vector<Variant>{gan.variant} : variants;
}

void ExperimentSpec::validate() const {
  require(!seeds.empty(), "seeds must be non-empty");
  require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), "seeds must be distinct");
  const auto vs = effective_variants();
  require(std::set<Variant>(vs.begin(), vs.end()).size() == vs.size(), "variants must be distinct");
  require(data.classes >= 2, "data.classes must be >= 2");
  require(data.radius > 0.0 && data.sigma > 0.0, "data.radius and data.sigma must be positive");
  require(data.n_train >= 3 && data.n_test >= 1, "data.n_train must be >= 3 and data.n_test >= 1");
  require(noise.mu_r >= 0.0 && noise.mu_r <= 1.0, "noise.mu_r must lie in [0, 1]");
  require(model_noise.mu_g >= 0.0 && model_noise.mu_g <= 1.0, "model_noise.mu_g must lie in [0, 1]");
  if (model_noise.percentile) {
    require(*model_noise.percentile > 0.0 && *model_noise.percentile <= 100.0,
            "model_noise.percentile must lie in (0, 100]");
  }
  require(metrics.samples >= 3 * static_cast<std::size_t>(data.classes),
          "metrics.samples must give every class at least 3 points");
  require(metrics.gan_train_samples >= static_cast<std::size_t>(metrics.gan_train.classifier.batch_size),
          "metrics.gan_train_samples must be at least one classifier batch");
  require(metrics.gan_train.averaged_epochs >= 1 &&
              metrics.gan_train.averaged_epochs <= metrics.gan_train.classifier.epochs,
          "metrics.gan_train.averaged_epochs must lie in [1, epochs]");
  gan.validate();
  real_transition(*this);
}

TransitionMatrix real_transition(const ExperimentSpec& spec) {
  const int c = spec.data.classes;
  if (spec.noise.type == NoiseType::symmetric) return build_symmetric(c, spec.noise.mu_r);
  std::vector<LabelFlip> flips = spec.noise.flips;
  if (flips.empty()) {
    for (int i = 0; i < c; ++i) flips.push_back({i, (i + 1) % c});
  }
  return build_asymmetric(c, spec.noise.mu_r, flips);
}

json spec_to_json(const ExperimentSpec& spec) {
  json gan = spec.gan;
  gan.erase("seed");
  gan.erase("variant");
  std::vector<std::string> variants;
  for (Variant v : spec.effective_variants()) variants.push_back(to_string(v));
  json flips = json::array();
  for (const auto& f : spec.noise.flips) flips.push_back({f.source, f.target});
  return json{
      {"data",
       {{"classes", spec.data.classes},
        {"radius", spec.data.radius},
        {"sigma", spec.data.sigma},
        {"n_train", spec.data.n_train},
        {"n_test", spec.data.n_test}}},
      {"noise", {{"type", to_string(spec.noise.type)}, {"mu_r", spec.noise.mu_r}, {"flips", flips}}},
      {"model_noise",
       {{"mode", to_string(spec.model_noise.mode)},
        {"mu_g", spec.model_noise.mu_g},
        {"percentile", spec.model_noise.percentile ? json(*spec.model_noise.percentile) : json(nullptr)},
        {"classifier", classifier_to_json(spec.model_noise.classifier)}}},
      {"gan", gan},
      {"variants", variants},
      {"metrics",
       {{"samples", spec.metrics.samples},
        {"gan_train_samples", spec.metrics.gan_train_samples},
        {"gan_train_averaged_epochs", spec.metrics.gan_train.averaged_epochs},
        {"gan_train_classifier", classifier_to_json(spec.metrics.gan_train.classifier)}}},
      {"seeds", spec.seeds},
      {"output_dir", spec.output_dir}};
}

ExperimentSpec spec_from_json(const json& j) {
  ExperimentSpec s;
  try {
    check_keys(j, {"data", "noise", "model_noise", "gan", "variants", "metrics", "seeds", "output_dir"}, "spec");
    if (j.contains("data")) {
      const json& d = j["data"];
      check_keys(d, {"classes", "radius", "sigma", "n_train", "n_test"}, "data");
      s.data.classes = d.value("classes", s.data.classes);
      s.data.radius = d.value("radius", s.data.radius);
      s.data.sigma = d.value("sigma", s.data.sigma);
      s.data.n_train = d.value("n_train", s.data.n_train);
      s.data.n_test = d.value("n_test", s.data.n_test);
    }
    if (j.contains("noise")) {
      const json& n = j["noise"];
      check_keys(n, {"type", "mu_r", "flips"}, "noise");
      if (n.contains("type")) s.noise.type = noise_type_from_string(n["type"].get<std::string>());
      s.noise.mu_r = n.value("mu_r", s.noise.mu_r);
      if (n.contains("flips")) {
        for (const auto& f : n["flips"]) {
          require(f.is_array() && f.size() == 2, "noise.flips entries must be [source, target] pairs");
          s.noise.flips.push_back({f[0].get<int>(), f[1].get<int>()});
        }
      }
    }
    if (j.contains("model_noise")) {
      const json& m = j["model_noise"];
      check_keys(m, {"mode", "mu_g", "percentile", "classifier"}, "model_noise");
      if (m.contains("mode")) s.model_noise.mode = model_noise_mode_from_string(m["mode"].get<std::string>());
      s.model_noise.mu_g = m.value("mu_g", s.model_noise.mu_g);
      if (m.contains("percentile") && !m["percentile"].is_null()) s.model_noise.percentile = m["percentile"].get<double>();
      if (m.contains("classifier")) {
        s.model_noise.classifier = classifier_from_json(m["classifier"], s.model_noise.classifier, "model_noise.classifier");
      }
    }
    if (j.contains("gan")) {
      require(!j["gan"].contains("seed"), "gan.seed is derived from the run seeds; use \"seeds\"");
      s.gan = gan_config_from_json(j["gan"]);
    }
    if (j.contains("variants")) {
      for (const auto& v : j["variants"]) s.variants.push_back(variant_from_string(v.get<std::string>()));
      // A single listed variant also becomes the config's own variant.
      if (s.variants.size() == 1) {
        s.gan.variant = s.variants.front();
        s.variants.clear();
      }
    }
    if (j.contains("metrics")) {
      const json& m = j["metrics"];
      check_keys(m, {"samples", "gan_train_samples", "gan_train_averaged_epochs", "gan_train_classifier"}, "metrics");
      s.metrics.samples = m.value("samples", s.metrics.samples);
      s.metrics.gan_train_samples = m.value("gan_train_samples", s.metrics.gan_train_samples);
      s.metrics.gan_train.averaged_epochs = m.value("gan_train_averaged_epochs", s.metrics.gan_train.averaged_epochs);
      if (m.contains("gan_train_classifier")) {
        s.metrics.gan_train.classifier =
            classifier_from_json(m["gan_train_classifier"], s.metrics.gan_train.classifier, "metrics.gan_train_classifier");
      }
    }
    if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) s.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string spec_hash(const ExperimentSpec& spec) {
  json j = spec_to_json(spec);
  j.erase("seeds");
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

void set_spec_field(json& spec_json, const std::string& field_path, const std::string& text) {
  // The variant lives in the variants list once serialized.
  const std::string dotted_path = field_path == "gan.variant" ? "variants" : field_path;
  json* node = &spec_json;
  std::stringstream path(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  require(!parts.empty(), "empty field path");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require(node->is_object() && node->contains(parts[i]), "unknown field: " + dotted_path);
    node = &(*node)[parts[i]];
  }
  try {
    auto parse_list = [&](auto convert) {
      json arr = json::array();
      std::stringstream items(text);
      std::string item;
      while (std::getline(items, item, ',')) arr.push_back(convert(item));
      return arr;
    };
    if (dotted_path == "seeds") {
      *node = parse_list([](const std::string& v) { return std::stoull(v); });
    } else if (dotted_path == "variants") {
      *node = parse_list([](const std::string& v) { return v; });
    } else if (node->is_boolean()) {
      require(text == "true" || text == "false", dotted_path + " expects true or false");
      *node = text == "true";
    } else if (node->is_number_unsigned()) {
      *node = std::stoull(text);
    } else if (node->is_number_integer()) {
      *node = std::stoll(text);
    } else if (node->is_number_float() || node->is_null()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      require(used == text.size(), dotted_path + " expects a number");
      *node = v;
    } else if (node->is_string()) {
      *node = text;
    } else {
      throw std::invalid_argument(dotted_path + " is not a scalar field");
    }
  } catch (const std::logic_error& e) {
    throw std::invalid_argument("cannot set " + dotted_path + " to \"" + text + "\": " + e.what());
  }
}

bool RunResult::any_aborted() const {
  for (const auto& c : cells) {
    if (!c.ok) return true;
  }
  return false;
}

fs::path resolve_output_root(const ExperimentSpec& spec, const fs::path& override_root) {
  if (!override_root.empty()) return override_root;
  if (!spec.output_dir.empty()) return spec.output_dir;
  if (const char* env = std::getenv("RGAN_OUT"); env && *env) return env;
  return "rgan-out";
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp-" << std::hash<std::thread::id>{}(std::this_thread::get_id());
  const fs::path temp = path.string() + suffix.str();
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + temp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("write failed: " + temp.string());
  }
  fs::rename(temp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunResult run(const ExperimentSpec& spec, const RunOptions& options) {
  spec.validate();
  RunResult result;
  result.hash = spec_hash(spec);
  result.directory = resolve_output_root(spec, options.output_root) / result.hash;
  json stored = spec_to_json(spec);
  stored.erase("seeds");
  stored.erase("output_dir");
  // Fails early when the directory is not writable.
  write_file_atomic(result.directory / "spec.json", stored.dump(2) + "\n");

  std::mutex log_mutex;
  auto log = [&](const std::string& line) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    options.log(line);
  };

  const auto variants = spec.effective_variants();
  for (auto seed : spec.seeds) {
    for (auto v : variants) {
      CellResult cell;
      cell.seed = seed;
      cell.variant = v;
      result.cells.push_back(cell);
    }
  }
  parallel_for(result.cells.size(), options.jobs, [&](std::size_t i) {
    CellResult& cell = result.cells[i];
    const fs::path dir = result.directory / cell_name(cell.seed) / to_string(cell.variant);
    const std::string label = cell_name(cell.seed) + "/" + to_string(cell.variant);
    if (auto cached = load_cached(dir / "report.json")) {
      cached->seed = cell.seed;
      cached->variant = cell.variant;
      cell = *cached;
      log(label + ": cached");
      return;
    }
    log(label + ": training");
    try {
      cell = run_cell(spec, result.hash, cell.seed, cell.variant, dir);
      log(label + ": done");
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      log(label + ": aborted: " + cell.error);
      try {
        json report{{"status", "aborted"}, {"spec_hash", result.hash}, {"seed", cell.seed},
                    {"variant", to_string(cell.variant)}, {"error", cell.error}};
        write_file_atomic(dir / "report.json", report.dump(2) + "\n");
      } catch (const std::exception&) {
        // The CSV row still records the abort.
      }
    }
  });

  std::string csv = std::string("seed,variant,") + kMetricsCsvHeader + ",status\n";
  for (const auto& cell : result.cells) {
    csv += std::to_string(cell.seed) + ',' + to_string(cell.variant) + ',' + metrics_csv_row(cell) + ',' +
           (cell.ok ? "ok" : "aborted") + '\n';
  }
  write_file_atomic(result.directory / "metrics.csv", csv);
  return result;
}

SweepResult sweep(const ExperimentSpec& templ, const std::string& axis, const std::vector<std::string>& values,
                  const RunOptions& options) {
  require(!values.empty(), "sweep needs at least one value");
  require(axis != "seeds" && axis != "variants" && axis != "output_dir", "sweep axis must be a semantic scalar field");
  templ.validate();
  const json base = spec_to_json(templ);
  {
    json probe = base;
    set_spec_field(probe, axis, values.front());
  }

  SweepResult out;
  std::ostringstream csv;
  csv << kSweepCsvHeader << '\n';
  // variant -> seed -> (x, gan_train) pairs
  std::map<std::string, std::map<std::uint64_t, std::vector<std::pair<double, double>>>> series;
  std::string key = spec_hash(templ) + "|" + axis;
  for (const auto& v : values) key += "|" + v;
  std::optional<std::vector<double>> numeric_values = std::vector<double>{};
  for (const auto& v : values) {
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      numeric_values->push_back(x);
    } catch (const std::exception&) {
      numeric_values.reset();
      break;
    }
  }

  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    json j = base;
    set_spec_field(j, axis, values[vi]);
    ExperimentSpec spec = spec_from_json(j);
    if (options.log) options.log(axis + "=" + values[vi]);
    const RunResult r = run(spec, options);
    for (const auto& cell : r.cells) {
      csv << axis << ',' << values[vi] << ',' << cell.seed << ',' << to_string(cell.variant) << ',';
      if (cell.ok) {
        csv << format_number(cell.metrics.fid) << ',' << format_number(cell.metrics.intra_fid) << ','
            << format_number(cell.metrics.gan_test) << ',' << format_number(cell.metrics.gan_train) << ",ok\n";
        if (numeric_values) series[to_string(cell.variant)][cell.seed].emplace_back((*numeric_values)[vi], cell.metrics.gan_train);
      } else {
        csv << "nan,nan,nan,nan,aborted\n";
        out.any_aborted = true;
      }
    }
  }

  json summary{{"axis", axis}, {"values", values}, {"metric", "gan_train"}};
  json per_variant = json::object();
  for (const auto& [variant, by_seed] : series) {
    json entry;
    // Pearson of the seed-averaged curve.
    std::map<double, std::pair<double, int>> sums;
    for (const auto& [seed, pts] : by_seed) {
      for (auto [x, y] : pts) {
        sums[x].first += y;
        sums[x].second += 1;
      }
    }
    std::vector<double> xs, ys;
    for (auto [x, acc] : sums) {
      xs.push_back(x);
      ys.push_back(acc.first / acc.second);
    }
    try {
      entry["pearson_of_means"] = xs.size() >= 2 ? json(pearson(xs, ys)) : json(nullptr);
    } catch (const std::domain_error&) {
      entry["pearson_of_means"] = nullptr;
    }
    std::vector<double> per_seed;
    for (const auto& [seed, pts] : by_seed) {
      std::vector<double> px, py;
      for (auto [x, y] : pts) {
        px.push_back(x);
        py.push_back(y);
      }
      try {
        if (px.size() >= 2) per_seed.push_back(pearson(px, py));
      } catch (const std::domain_error&) {
      }
    }
    if (!per_seed.empty()) {
      double mean = 0.0;
      for (double r : per_seed) mean += r;
      mean /= static_cast<double>(per_seed.size());
      double var = 0.0;
      for (double r : per_seed) var += (r - mean) * (r - mean);
      entry["per_seed_mean"] = mean;
      entry["per_seed_std"] = per_seed.size() > 1 ? std::sqrt(var / static_cast<double>(per_seed.size() - 1)) : 0.0;
      entry["per_seed"] = per_seed;
    }
    entry["mean_gan_train"] = ys;
    per_variant[variant] = entry;
  }
  summary["pearson"] = per_variant;
  if (!numeric_values) summary["note"] = "axis values are not numeric; no correlation computed";

  const fs::path dir = resolve_output_root(templ, options.output_root) / ("sweep-" + fnv1a_hex(key));
  out.csv = csv.str();
  out.summary = summary;
  out.csv_path = dir / "sweep.csv";
  out.summary_path = dir / "summary.json";
  write_file_atomic(out.csv_path, out.csv);
  write_file_atomic(out.summary_path, summary.dump(2) + "\n");
  return out;
}

std::string export_samples(const TrainedModel& model, std::size_t per_class, std::uint64_t seed) {
  require(per_class >= 1, "need at least one latent row");
  const int c = model.classes;
  const int d = model.config.latent_dim;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(static_cast<Eigen::Index>(per_class), d);
  for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] = normal(rng);
  const auto rows = static_cast<Eigen::Index>(per_class) * c;
  Matrix latent(rows, d);
  std::vector<int> labels(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    latent.row(r) = z.row(r / c);
    labels[static_cast<std::size_t>(r)] = static_cast<int>(r % c);
  }
  const Matrix x = sample_with_latent(model, latent, labels);
  std::ostringstream out;
  out << kSamplesCsvHeader << '\n';
  for (Eigen::Index r = 0; r < rows; ++r) {
    out << r / c << ',' << labels[static_cast<std::size_t>(r)] << ',' << format_number(x(r, 0)) << ','
        << format_number(x(r, 1)) << '\n';
  }
  return out.str();
}

std::string summarize_run(const fs::path& run_directory) {
  require(fs::is_directory(run_directory), "not a run directory: " + run_directory.string());
  static const char* kNames[] = {"fid", "intra_fid", "intra_fid_noisy", "gan_test", "gan_train"};
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  std::vector<fs::path> reports;
  for (const auto& entry : fs::recursive_directory_iterator(run_directory)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") reports.push_back(entry.path());
  }
  std::sort(reports.begin(), reports.end());
  for (const auto& path : reports) {
    const json j = json::parse(read_file(path));
    if (j.value("status", "") != "ok") continue;
    for (const char* name : kNames) values[j.at("variant").get<std::string>()][name].push_back(json_number(j.at("flat").at(name)));
  }
  std::ostringstream out;
  out << "variant,metric,mean,std,n\n";
  for (const auto& [variant, metrics] : values) {
    for (const char* name : kNames) {
      const auto& xs = metrics.at(name);
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
      out << variant << ',' << name << ',' << format_number(mean) << ',' << format_number(sd) << ',' << xs.size()
          << '\n';
    }
  }
  return out.str();
}

}  // namespace rgan
