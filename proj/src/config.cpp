#include "mg/config.hpp"

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace mg {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

class FieldReader {
 public:
  explicit FieldReader(const IniMap& ini) : ini_(ini) {}

  bool has(const std::string& section, const std::string& key) const {
    const auto s = ini_.find(section);
    return s != ini_.end() && s->second.count(key) > 0;
  }

  std::string str(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    const auto s = ini_.find(section);
    if (s == ini_.end()) return fallback;
    const auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }

  std::string required(const std::string& section, const std::string& key) const {
    if (!has(section, key)) {
      throw ConfigError("config: missing required field [" + section + "] " + key);
    }
    return str(section, key, "");
  }

  long long integer(const std::string& section, const std::string& key,
                    long long fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = str(section, key, "");
    try {
      std::size_t used = 0;
      const long long v = std::stoll(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: field [" + section + "] " + key + " = '" + raw +
                        "' is not an integer");
    }
  }

  double real(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = str(section, key, "");
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: field [" + section + "] " + key + " = '" + raw +
                        "' is not a number");
    }
  }

 private:
  const IniMap& ini_;
};

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

void check_known_keys(const IniMap& ini) {
  static const std::map<std::string, std::set<std::string>> known = {
      {"run", {"seed", "image_size", "batch", "workers", "out"}},
      {"schedule", {"kind", "steps", "beta_min", "beta_max"}},
      {"sampler", {"kind", "eta"}},
      {"score", {"kind", "path"}},
      {"extractor", {"kind", "max_order", "checkpoint"}},
      {"guidance",
       {"reference", "scale", "scale_schedule", "recurrence", "loss", "grad_mode"}},
      {"train", {"dataset", "steps", "lr", "hidden1", "hidden2"}},
  };
  for (const auto& [section, keys] : ini) {
    const auto it = known.find(section);
    if (it == known.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : keys) {
      (void)value;
      if (it->second.count(key) == 0) {
        throw ConfigError("config: unknown key '" + key + "' in section [" + section + "]");
      }
    }
  }
}

}  // namespace

IniMap parse_ini(const std::string& text, const std::string& name) {
  IniMap ini;
  std::string section;
  std::size_t pos = 0;
  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    const std::string raw_line = text.substr(line_start, line_end - line_start);
    pos = line_start;
    line_start = line_end + 1;

    std::string line = raw_line;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) {
      if (line_end == text.size()) break;
      continue;
    }

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ParseError(name + ": malformed section header '" + raw_line + "'", pos);
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError(name + ": empty section name", pos);
      ini[section];  // sections may legitimately be empty
    } else {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ParseError(name + ": expected 'key = value' but got '" + raw_line + "'", pos);
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError(name + ": empty key", pos);
      if (section.empty()) {
        throw ParseError(name + ": key '" + key + "' appears before any [section]", pos);
      }
      ini[section][key] = value;
    }
    if (line_end == text.size()) break;
  }
  return ini;
}

std::string serialize_ini(const IniMap& ini) {
  std::string out;
  bool first = true;
  for (const auto& [section, keys] : ini) {
    if (!first) out += "\n";
    first = false;
    out += "[" + section + "]\n";
    for (const auto& [key, value] : keys) {
      out += key + " = " + value + "\n";
    }
  }
  return out;
}

IniMap load_ini(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_ini(text, path);
}

std::uint64_t config_hash(const IniMap& ini) {
  const std::string canonical = serialize_ini(ini);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string config_hash_hex(const IniMap& ini) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(ini)));
  return buf;
}

RunConfig parse_run_config(const IniMap& ini, const std::string& base_dir) {
  check_known_keys(ini);
  FieldReader f(ini);
  RunConfig cfg;
  cfg.raw = ini;

  const long long seed = f.integer("run", "seed", 0);
  if (seed < 0) throw ConfigError("config: [run] seed must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.image_size = static_cast<int>(f.integer("run", "image_size", cfg.image_size));
  if (cfg.image_size < 1 || cfg.image_size > 512) {
    throw ConfigError("config: [run] image_size must be in [1, 512]");
  }
  cfg.batch = static_cast<int>(f.integer("run", "batch", cfg.batch));
  if (cfg.batch < 1) throw ConfigError("config: [run] batch must be >= 1");
  cfg.workers = static_cast<int>(f.integer("run", "workers", cfg.workers));
  if (cfg.workers < 1) throw ConfigError("config: [run] workers must be >= 1");
  cfg.out_dir = resolve_path(base_dir, f.str("run", "out", ""));

  const std::string schedule_kind = f.str("schedule", "kind", "linear");
  if (schedule_kind == "linear") {
    cfg.schedule_kind = ScheduleKind::kLinear;
  } else if (schedule_kind == "cosine") {
    cfg.schedule_kind = ScheduleKind::kCosine;
  } else {
    throw ConfigError("config: [schedule] kind must be linear or cosine");
  }
  cfg.steps = static_cast<int>(f.integer("schedule", "steps", cfg.steps));
  if (cfg.steps < 1) throw ConfigError("config: [schedule] steps must be >= 1");
  cfg.beta_min = f.real("schedule", "beta_min", cfg.beta_min);
  cfg.beta_max = f.real("schedule", "beta_max", cfg.beta_max);
  if (!(cfg.beta_min > 0.0) || !(cfg.beta_min <= cfg.beta_max) || !(cfg.beta_max < 1.0)) {
    throw ConfigError("config: [schedule] requires 0 < beta_min <= beta_max < 1");
  }

  const std::string sampler_kind = f.str("sampler", "kind", "ddim");
  if (sampler_kind == "ddim") {
    cfg.sampler.type = SamplerKind::Type::kDdim;
  } else if (sampler_kind == "ddpm") {
    cfg.sampler.type = SamplerKind::Type::kDdpm;
  } else {
    throw ConfigError("config: [sampler] kind must be ddim or ddpm");
  }
  cfg.sampler.eta = f.real("sampler", "eta", 0.0);
  if (cfg.sampler.eta < 0.0 || cfg.sampler.eta > 1.0) {
    throw ConfigError("config: [sampler] eta must be in [0, 1]");
  }

  const std::string score_kind = f.str("score", "kind", "gmm");
  if (score_kind == "gmm") {
    cfg.score_kind = ScoreSpecKind::kGmm;
  } else if (score_kind == "dataset") {
    cfg.score_kind = ScoreSpecKind::kDataset;
  } else if (score_kind == "checkpoint") {
    cfg.score_kind = ScoreSpecKind::kCheckpoint;
  } else {
    throw ConfigError("config: [score] kind must be gmm, dataset, or checkpoint");
  }
  cfg.score_path = resolve_path(base_dir, f.str("score", "path", ""));

  const std::string extractor_kind = f.str("extractor", "kind", "moments");
  if (extractor_kind == "moments") {
    cfg.extractor_kind = ExtractorSpecKind::kMoments;
  } else if (extractor_kind == "central-moments") {
    cfg.extractor_kind = ExtractorSpecKind::kCentralMoments;
  } else if (extractor_kind == "deep-moments") {
    cfg.extractor_kind = ExtractorSpecKind::kDeepMoments;
  } else {
    throw ConfigError("config: [extractor] kind must be moments, central-moments, or deep-moments");
  }
  cfg.max_order = static_cast<int>(f.integer("extractor", "max_order", cfg.max_order));
  if (cfg.max_order < 0 || cfg.max_order > 12) {
    throw ConfigError("config: [extractor] max_order must be in [0, 12]");
  }
  cfg.extractor_checkpoint = resolve_path(base_dir, f.str("extractor", "checkpoint", ""));

  cfg.reference_path = resolve_path(base_dir, f.str("guidance", "reference", ""));
  cfg.guidance.scale = f.real("guidance", "scale", 0.0);
  if (cfg.guidance.scale < 0.0) throw ConfigError("config: [guidance] scale must be >= 0");
  const std::string scale_schedule = f.str("guidance", "scale_schedule", "constant");
  if (scale_schedule == "constant") {
    cfg.guidance.scale_schedule = ScaleSchedule::kConstant;
  } else if (scale_schedule == "sigma") {
    cfg.guidance.scale_schedule = ScaleSchedule::kSigmaScaled;
  } else {
    throw ConfigError("config: [guidance] scale_schedule must be constant or sigma");
  }
  cfg.guidance.recurrence_steps =
      static_cast<int>(f.integer("guidance", "recurrence", 1));
  if (cfg.guidance.recurrence_steps < 0) {
    throw ConfigError("config: [guidance] recurrence must be >= 0");
  }
  const std::string loss = f.str("guidance", "loss", "mse");
  if (loss == "mse") {
    cfg.guidance.loss_kind = LossKind::kMse;
  } else if (loss == "cosine") {
    cfg.guidance.loss_kind = LossKind::kCosine;
  } else {
    throw ConfigError("config: [guidance] loss must be mse or cosine");
  }
  const std::string grad_mode = f.str("guidance", "grad_mode", "stop_grad");
  if (grad_mode == "stop_grad") {
    cfg.guidance.grad_mode = GradMode::kStopGrad;
  } else if (grad_mode == "full_backprop") {
    cfg.guidance.grad_mode = GradMode::kFullBackprop;
  } else {
    throw ConfigError("config: [guidance] grad_mode must be stop_grad or full_backprop");
  }

  cfg.train_dataset = resolve_path(base_dir, f.str("train", "dataset", ""));
  cfg.train_steps = static_cast<int>(f.integer("train", "steps", cfg.train_steps));
  if (cfg.train_steps < 0) throw ConfigError("config: [train] steps must be >= 0");
  cfg.train_lr = f.real("train", "lr", cfg.train_lr);
  cfg.hidden1 = static_cast<int>(f.integer("train", "hidden1", cfg.hidden1));
  cfg.hidden2 = static_cast<int>(f.integer("train", "hidden2", cfg.hidden2));
  if (cfg.hidden1 < 1 || cfg.hidden2 < 1) {
    throw ConfigError("config: [train] hidden sizes must be >= 1");
  }

  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  const IniMap ini = load_ini(path);
  const std::string base_dir = std::filesystem::path(path).parent_path().string();
  try {
    return parse_run_config(ini, base_dir);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace mg
