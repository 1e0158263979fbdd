#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mg/config.hpp"
#include "mg/extractor.hpp"
#include "mg/score_model.hpp"

namespace mg::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 config/validation failure.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::unique_ptr<ScoreModel> build_score_model(const RunConfig& config);
std::unique_ptr<FeatureExtractor> build_extractor(const RunConfig& config);

/// Unguided batch generation into the run directory: sample_###.pgm files
/// plus MANIFEST and a canonical config echo.
int cmd_sample(const RunConfig& config);

/// Guided batch generation: samples, trace.csv, eval report, MANIFEST. On
/// failure partial outputs are listed in a MANIFEST marked incomplete.
int cmd_guide(const RunConfig& config);

/// Evaluate an existing directory of sample_*.pgm against the configured
/// reference and extractor.
int cmd_eval(const RunConfig& config);

/// Run verification suites; scope may be empty (all) or a suite name.
int cmd_check(const std::string& scope);

/// Train the tiny denoiser on a directory of PGM images; writes
/// denoiser.ckpt and loss_curve.csv into the run directory.
int cmd_train(const RunConfig& config);

/// Full argv interface: verb + flags (--config, --seed, --out, --workers,
/// --scope). Returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace mg::cli
