#include "mg/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "mg/checks.hpp"
#include "mg/deep_moments.hpp"
#include "mg/guidance.hpp"
#include "mg/metrics.hpp"
#include "mg/pgm.hpp"
#include "mg/tiny_denoiser.hpp"

namespace fs = std::filesystem;

namespace mg::cli {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string chain_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%03d.pgm", index);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

struct ManifestEntry {
  std::string role;
  std::string name;
};

void write_manifest(const fs::path& dir, const std::string& command, const IniMap& raw,
                    bool complete, const std::vector<ManifestEntry>& entries) {
  std::string text = "# run manifest\n";
  text += "command: " + command + "\n";
  text += "config_hash: " + config_hash_hex(raw) + "\n";
  text += std::string("complete: ") + (complete ? "true" : "false") + "\n";
  for (const auto& e : entries) text += "entry: " + e.role + " " + e.name + "\n";
  write_text_file(dir / "MANIFEST", text);
}

fs::path prepare_run_dir(const RunConfig& config, const char* command) {
  if (config.out_dir.empty()) {
    throw ConfigError(std::string("config: missing required field [run] out for '") + command +
                      "'");
  }
  fs::path dir(config.out_dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> list_pgm_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ConfigError("expected directory with .pgm files at '" + dir.string() + "'");
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

GaussianMixtureModel load_gmm_file(const std::string& path) {
  const IniMap ini = load_ini(path);
  const std::string base_dir = fs::path(path).parent_path().string();
  const auto gmm_it = ini.find("gmm");
  if (gmm_it == ini.end() || gmm_it->second.count("components") == 0) {
    throw ConfigError("gmm file '" + path + "': missing [gmm] components");
  }
  int count = 0;
  try {
    count = std::stoi(gmm_it->second.at("components"));
  } catch (const std::exception&) {
    throw ConfigError("gmm file '" + path + "': components is not an integer");
  }
  if (count < 1) throw ConfigError("gmm file '" + path + "': need at least one component");

  std::vector<GaussianComponent> components;
  for (int k = 0; k < count; ++k) {
    const std::string section = "component." + std::to_string(k);
    const auto it = ini.find(section);
    if (it == ini.end()) {
      throw ConfigError("gmm file '" + path + "': missing section [" + section + "]");
    }
    const auto& keys = it->second;
    if (keys.count("weight") == 0 || keys.count("variance") == 0 || keys.count("mean") == 0) {
      throw ConfigError("gmm file '" + path + "': [" + section +
                        "] needs weight, variance, and mean");
    }
    GaussianComponent comp;
    try {
      comp.weight = std::stod(keys.at("weight"));
      comp.variance = std::stod(keys.at("variance"));
    } catch (const std::exception&) {
      throw ConfigError("gmm file '" + path + "': [" + section + "] has a malformed number");
    }
    fs::path mean_path(keys.at("mean"));
    if (mean_path.is_relative()) mean_path = fs::path(base_dir) / mean_path;
    comp.mean = read_pgm(mean_path.string());
    components.push_back(std::move(comp));
  }
  return GaussianMixtureModel(std::move(components));
}

std::vector<Image> load_dataset_dir(const std::string& dir) {
  const std::vector<std::string> names = list_pgm_files(dir);
  if (names.empty()) throw ConfigError("dataset directory '" + dir + "' holds no .pgm files");
  std::vector<Image> images;
  images.reserve(names.size());
  for (const std::string& name : names) {
    images.push_back(read_pgm((fs::path(dir) / name).string()));
  }
  return images;
}

void require_model_size(const ScoreModel& model, const RunConfig& config) {
  if (model.height() != config.image_size || model.width() != config.image_size) {
    throw ConfigError("config: [run] image_size " + std::to_string(config.image_size) +
                      " does not match score model shape " + std::to_string(model.height()) +
                      "x" + std::to_string(model.width()));
  }
}

std::vector<std::pair<std::string, std::string>> flatten_config(const IniMap& raw) {
  std::vector<std::pair<std::string, std::string>> flat;
  for (const auto& [section, keys] : raw) {
    for (const auto& [key, value] : keys) flat.emplace_back(section + "." + key, value);
  }
  return flat;
}

/// Run one job per chain index on a small worker pool; results land in
/// deterministic chain order regardless of scheduling.
template <typename Job>
void run_chains(int batch, int workers, Job&& job) {
  if (workers <= 1 || batch <= 1) {
    for (int c = 0; c < batch; ++c) job(c);
    return;
  }
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  const int n_workers = std::min(workers, batch);
  for (int w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int c = w; c < batch; c += n_workers) {
        try {
          job(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string trace_csv(const std::vector<std::vector<TraceRecord>>& per_chain) {
  std::string out = "chain_id,t,repeat_index,loss,grad_norm\n";
  for (std::size_t chain = 0; chain < per_chain.size(); ++chain) {
    for (const TraceRecord& rec : per_chain[chain]) {
      out += std::to_string(chain) + "," + std::to_string(rec.t) + "," +
             std::to_string(rec.repeat) + "," + fmt17(rec.loss) + "," + fmt17(rec.grad_norm) +
             "\n";
    }
  }
  return out;
}

}  // namespace

std::unique_ptr<ScoreModel> build_score_model(const RunConfig& config) {
  switch (config.score_kind) {
    case ScoreSpecKind::kGmm:
      if (config.score_path.empty()) {
        throw ConfigError("config: missing required field [score] path (gmm file)");
      }
      return std::make_unique<GaussianMixtureModel>(load_gmm_file(config.score_path));
    case ScoreSpecKind::kDataset:
      if (config.score_path.empty()) {
        throw ConfigError("config: missing required field [score] path (dataset directory)");
      }
      return std::make_unique<EmpiricalScoreModel>(load_dataset_dir(config.score_path));
    case ScoreSpecKind::kCheckpoint:
      if (config.score_path.empty()) {
        throw ConfigError("config: missing required field [score] path (checkpoint)");
      }
      return std::make_unique<TinyDenoiser>(TinyDenoiser::load(config.score_path));
  }
  throw ConfigError("config: unreachable score kind");
}

std::unique_ptr<FeatureExtractor> build_extractor(const RunConfig& config) {
  const MomentBasis basis =
      build_basis(orders_up_to(config.max_order), config.image_size, config.image_size);
  switch (config.extractor_kind) {
    case ExtractorSpecKind::kMoments:
      return std::make_unique<MomentExtractor>(basis);
    case ExtractorSpecKind::kCentralMoments:
      return std::make_unique<CentralMomentExtractor>(basis);
    case ExtractorSpecKind::kDeepMoments: {
      // Without a checkpoint a fixed random projection net stands in; its
      // parameters derive from the run seed.
      PixelFeatureNet net = config.extractor_checkpoint.empty()
                                ? init_pixel_net(4, config.seed)
                                : load_pixel_net(config.extractor_checkpoint);
      return std::make_unique<DeepMomentExtractor>(std::move(net), basis);
    }
  }
  throw ConfigError("config: unreachable extractor kind");
}

int cmd_sample(const RunConfig& config) {
  // Input and configuration problems surface before anything is written and
  // carry exit code 2; failures past this point leave an incomplete MANIFEST.
  const std::unique_ptr<ScoreModel> model = build_score_model(config);
  require_model_size(*model, config);
  const NoiseSchedule schedule =
      make_schedule(config.schedule_kind, config.steps, config.beta_min, config.beta_max);

  const fs::path dir = prepare_run_dir(config, "sample");
  std::vector<ManifestEntry> entries;
  try {
    std::vector<Image> samples(config.batch);
    run_chains(config.batch, config.workers, [&](int chain) {
      RngStream rng(config.seed, static_cast<std::uint64_t>(chain));
      samples[chain] = sample_chain(*model, schedule, config.sampler, rng);
    });

    for (int c = 0; c < config.batch; ++c) {
      write_pgm(samples[c], (dir / chain_filename(c)).string());
      entries.push_back({"sample", chain_filename(c)});
    }
    write_text_file(dir / "config.ini", serialize_ini(config.raw));
    entries.push_back({"config", "config.ini"});
    write_manifest(dir, "sample", config.raw, true, entries);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "sample: " << e.what() << "\n";
    write_manifest(dir, "sample", config.raw, false, entries);
    return kExitRuntime;
  }
}

int cmd_guide(const RunConfig& config) {
  if (config.reference_path.empty()) {
    throw ConfigError("config: missing required field [guidance] reference");
  }
  const Image z_ref = read_pgm(config.reference_path);
  if (z_ref.height != config.image_size || z_ref.width != config.image_size) {
    throw ConfigError("config: [guidance] reference is " + std::to_string(z_ref.height) + "x" +
                      std::to_string(z_ref.width) + " but [run] image_size is " +
                      std::to_string(config.image_size));
  }
  const std::unique_ptr<ScoreModel> model = build_score_model(config);
  require_model_size(*model, config);
  const std::unique_ptr<FeatureExtractor> extractor = build_extractor(config);
  const NoiseSchedule schedule =
      make_schedule(config.schedule_kind, config.steps, config.beta_min, config.beta_max);

  const fs::path dir = prepare_run_dir(config, "guide");
  std::vector<ManifestEntry> entries;
  try {
    std::vector<Image> samples(config.batch);
    std::vector<std::vector<TraceRecord>> traces(config.batch);
    run_chains(config.batch, config.workers, [&](int chain) {
      RngStream rng(config.seed, static_cast<std::uint64_t>(chain));
      GuidedRun run = guided_sample(*model, *extractor, z_ref, schedule, config.guidance,
                                    config.sampler, rng);
      samples[chain] = std::move(run.sample);
      traces[chain] = std::move(run.trace);
    });

    std::vector<std::string> names;
    for (int c = 0; c < config.batch; ++c) {
      write_pgm(samples[c], (dir / chain_filename(c)).string());
      entries.push_back({"sample", chain_filename(c)});
      names.push_back(chain_filename(c));
    }

    write_text_file(dir / "trace.csv", trace_csv(traces));
    entries.push_back({"trace", "trace.csv"});

    EvalReport report = evaluate_samples(*extractor, z_ref, samples);
    report.config_echo = flatten_config(config.raw);
    write_text_file(dir / "eval.txt", render_eval_report(report));
    entries.push_back({"report", "eval.txt"});
    write_text_file(dir / "per_sample.csv", render_per_sample_table(report, names));
    entries.push_back({"table", "per_sample.csv"});

    write_text_file(dir / "config.ini", serialize_ini(config.raw));
    entries.push_back({"config", "config.ini"});
    write_manifest(dir, "guide", config.raw, true, entries);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "guide: " << e.what() << "\n";
    write_manifest(dir, "guide", config.raw, false, entries);
    return kExitRuntime;
  }
}

int cmd_eval(const RunConfig& config) {
  if (config.reference_path.empty()) {
    throw ConfigError("config: missing required field [guidance] reference");
  }
  const fs::path dir = prepare_run_dir(config, "eval");
  const Image z_ref = read_pgm(config.reference_path);
  if (z_ref.height != config.image_size || z_ref.width != config.image_size) {
    throw ConfigError("config: [guidance] reference size does not match [run] image_size");
  }
  const std::unique_ptr<FeatureExtractor> extractor = build_extractor(config);

  std::vector<std::string> names;
  std::vector<Image> samples;
  for (const std::string& name : list_pgm_files(dir)) {
    samples.push_back(read_pgm((dir / name).string()));
    names.push_back(name);
  }
  if (samples.empty()) {
    throw ConfigError("eval: no sample .pgm files in '" + dir.string() + "'");
  }

  EvalReport report = evaluate_samples(*extractor, z_ref, samples);
  report.config_echo = flatten_config(config.raw);
  write_text_file(dir / "eval.txt", render_eval_report(report));
  write_text_file(dir / "per_sample.csv", render_per_sample_table(report, names));
  std::cout << render_eval_report(report);
  return kExitOk;
}

int cmd_check(const std::string& scope) {
  const std::vector<CheckResult> results = run_checks(scope);
  bool all_pass = true;
  std::size_t name_width = 4;
  for (const auto& r : results) name_width = std::max(name_width, r.name.size());
  std::printf("%-10s %-*s %-6s %s\n", "suite", static_cast<int>(name_width), "check", "result",
              "detail");
  for (const auto& r : results) {
    all_pass = all_pass && r.pass;
    std::printf("%-10s %-*s %-6s %s\n", r.suite.c_str(), static_cast<int>(name_width),
                r.name.c_str(), r.pass ? "PASS" : "FAIL", r.detail.c_str());
  }
  return all_pass ? kExitOk : kExitRuntime;
}

int cmd_train(const RunConfig& config) {
  if (config.train_dataset.empty()) {
    throw ConfigError("config: missing required field [train] dataset");
  }
  const std::vector<Image> dataset = load_dataset_dir(config.train_dataset);
  for (const Image& img : dataset) {
    if (img.height != config.image_size || img.width != config.image_size) {
      throw ConfigError("config: [train] dataset image size does not match [run] image_size");
    }
  }
  const NoiseSchedule schedule =
      make_schedule(config.schedule_kind, config.steps, config.beta_min, config.beta_max);

  const fs::path dir = prepare_run_dir(config, "train");
  std::vector<ManifestEntry> entries;
  try {
    TinyDenoiser model = TinyDenoiser::random_init(config.image_size, config.image_size,
                                                   config.hidden1, config.hidden2, config.seed);
    TrainOptions options;
    options.steps = config.train_steps;
    options.lr = config.train_lr;
    RngStream rng(config.seed, 0xB00);
    const TrainReport report = train_denoiser(model, dataset, schedule, options, rng);

    model.save((dir / "denoiser.ckpt").string());
    entries.push_back({"checkpoint", "denoiser.ckpt"});

    std::string curve = "step,val_loss\n";
    for (const auto& [step, loss] : report.val_loss) {
      curve += std::to_string(step) + "," + fmt17(loss) + "\n";
    }
    write_text_file(dir / "loss_curve.csv", curve);
    entries.push_back({"loss-curve", "loss_curve.csv"});

    write_text_file(dir / "config.ini", serialize_ini(config.raw));
    entries.push_back({"config", "config.ini"});
    write_manifest(dir, "train", config.raw, true, entries);
    std::cout << "train: validation loss " << fmt17(report.initial_val_loss) << " -> "
              << fmt17(report.final_val_loss) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << "\n";
    write_manifest(dir, "train", config.raw, false, entries);
    return kExitRuntime;
  }
}

namespace {

void print_usage() {
  std::cout << "Usage: mgd <verb> [options]\n"
            << "Verbs:\n"
            << "  sample   unguided batch generation\n"
            << "  guide    feature-guided batch generation\n"
            << "  eval     score an existing sample directory\n"
            << "  check    run the verification suites\n"
            << "  train    fit the tiny denoiser on a PGM dataset\n"
            << "Options:\n"
            << "  --config PATH   run configuration file (required except for check)\n"
            << "  --seed N        override [run] seed\n"
            << "  --out DIR       override [run] out\n"
            << "  --workers N     override [run] workers\n"
            << "  --scope NAME    check suite: adjoints | gradients | marginals\n"
            << "  --help          show this message\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    if (argc < 2) {
      print_usage();
      return kExitConfig;
    }
    const std::string verb = argv[1];
    if (verb == "--help" || verb == "help") {
      print_usage();
      return kExitOk;
    }

    std::string config_path, out_override, scope;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> workers_override;
    for (int i = 2; i < argc; ++i) {
      const std::string arg = argv[i];
      auto next = [&](const char* flag) -> std::string {
        if (i + 1 >= argc) throw ConfigError(std::string("cli: ") + flag + " needs a value");
        return argv[++i];
      };
      if (arg == "--config") {
        config_path = next("--config");
      } else if (arg == "--seed") {
        seed_override = std::stoull(next("--seed"));
      } else if (arg == "--out") {
        out_override = next("--out");
      } else if (arg == "--workers") {
        workers_override = std::stoi(next("--workers"));
      } else if (arg == "--scope") {
        scope = next("--scope");
      } else if (arg == "--help") {
        print_usage();
        return kExitOk;
      } else {
        throw ConfigError("cli: unknown argument '" + arg + "'");
      }
    }

    if (verb == "check") return cmd_check(scope);

    if (config_path.empty()) {
      throw ConfigError("cli: '" + verb + "' requires --config PATH");
    }
    RunConfig config = load_run_config(config_path);
    if (seed_override) {
      config.seed = *seed_override;
      config.raw["run"]["seed"] = std::to_string(*seed_override);
    }
    if (!out_override.empty()) {
      config.out_dir = out_override;
      config.raw["run"]["out"] = out_override;
    }
    if (workers_override) {
      if (*workers_override < 1) throw ConfigError("cli: --workers must be >= 1");
      config.workers = *workers_override;
      config.raw["run"]["workers"] = std::to_string(*workers_override);
    }

    if (verb == "sample") return cmd_sample(config);
    if (verb == "guide") return cmd_guide(config);
    if (verb == "eval") return cmd_eval(config);
    if (verb == "train") return cmd_train(config);
    throw ConfigError("cli: unknown verb '" + verb + "'");
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace mg::cli
