#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mg/extractor.hpp"
#include "mg/image.hpp"

namespace mg {

/// Plain cosine similarity in feature space; descriptors must match and
/// neither vector may be zero. Computed as dot(a,b)/sqrt(dot(a,a)*dot(b,b)),
/// which is exactly 1 for bit-identical vectors.
double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

/// Per-sample cosine similarity to the reference's features.
std::vector<double> reference_similarities(const FeatureExtractor& extractor,
                                           const Image& reference,
                                           const std::vector<Image>& samples);

/// Fidelity: mean cosine similarity between the reference's features and each
/// sample's features. In [-1, 1]; 1 when every sample matches the reference.
double feat_i(const FeatureExtractor& extractor, const Image& reference,
              const std::vector<Image>& samples);

/// Diversity: one minus the mean pairwise cosine similarity over unordered
/// distinct index pairs (self-pairs excluded). In [0, 2]; exactly 0 when all
/// samples are identical. Requires at least two samples.
double i_feat(const FeatureExtractor& extractor, const std::vector<Image>& samples);

/// Qualitative reading of a diversity value: "stagnant" below 0.18,
/// "balanced" in [0.18, 0.35], "divergent" above 0.45, "intermediate" in the
/// unlabeled gap between the last two.
std::string diversity_band(double diversity);

struct EvalReport {
  int n_samples = 0;
  std::string extractor_descriptor;
  double fidelity_mean = 0.0;
  double fidelity_std = 0.0;
  std::vector<double> per_sample_fidelity;
  std::optional<double> diversity;  // absent with fewer than two samples
  std::string diversity_label;
  std::vector<std::pair<std::string, std::string>> config_echo;
};

EvalReport evaluate_samples(const FeatureExtractor& extractor, const Image& reference,
                            const std::vector<Image>& samples);

/// "key: value" lines (config echo keys prefixed with "config."), without the
/// per-sample table.
std::string render_eval_report(const EvalReport& report);

/// Comma-delimited per-sample table: header then one row per sample.
std::string render_per_sample_table(const EvalReport& report,
                                    const std::vector<std::string>& sample_names);

}  // namespace mg
