#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mg/errors.hpp"
#include "mg/guidance.hpp"
#include "mg/schedule.hpp"

namespace mg {

/// Flat "key = value" text with [section] headers; '#' and ';' start
/// comments. No nesting. Serialization is canonical (sorted sections and
/// keys), so parse -> serialize -> parse is a fixed point.
using IniMap = std::map<std::string, std::map<std::string, std::string>>;

IniMap parse_ini(const std::string& text, const std::string& name = "<memory>");
std::string serialize_ini(const IniMap& ini);
IniMap load_ini(const std::string& path);

/// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const IniMap& ini);
std::string config_hash_hex(const IniMap& ini);

enum class ScoreSpecKind { kGmm, kDataset, kCheckpoint };
enum class ExtractorSpecKind { kMoments, kCentralMoments, kDeepMoments };

/// Typed view of a run configuration file. Paths are resolved relative to
/// the config file's directory.
struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  int image_size = 16;
  int batch = 1;
  int workers = 1;
  std::string out_dir;

  // [schedule]
  ScheduleKind schedule_kind = ScheduleKind::kLinear;
  int steps = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  // [sampler]
  SamplerKind sampler;

  // [score]
  ScoreSpecKind score_kind = ScoreSpecKind::kGmm;
  std::string score_path;

  // [extractor]
  ExtractorSpecKind extractor_kind = ExtractorSpecKind::kMoments;
  int max_order = 6;
  std::string extractor_checkpoint;

  // [guidance]
  std::string reference_path;
  GuidanceConfig guidance;

  // [train]
  std::string train_dataset;
  int train_steps = 2000;
  double train_lr = 0.05;
  int hidden1 = 32;
  int hidden2 = 32;

  IniMap raw;  // the parsed file, for hashing and echoing
};

/// Validate and type the parsed file. Unknown sections or keys, malformed
/// numbers, and out-of-range values raise ConfigError naming the field.
RunConfig parse_run_config(const IniMap& ini, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

}  // namespace mg
