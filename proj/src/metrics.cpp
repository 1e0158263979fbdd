#include "mg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mg {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
  if (a.descriptor != b.descriptor) {
    throw std::invalid_argument("cosine_similarity: descriptor mismatch ('" + a.descriptor +
                                "' vs '" + b.descriptor + "')");
  }
  if (a.values.size() != b.values.size()) {
    throw std::invalid_argument("cosine_similarity: length mismatch");
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    ab += a.values[i] * b.values[i];
    aa += a.values[i] * a.values[i];
    bb += b.values[i] * b.values[i];
  }
  if (aa == 0.0 || bb == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero feature vector");
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<double> reference_similarities(const FeatureExtractor& extractor,
                                           const Image& reference,
                                           const std::vector<Image>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("reference_similarities: need at least one sample");
  }
  const FeatureVector ref = extractor.extract(reference);
  std::vector<double> sims;
  sims.reserve(samples.size());
  for (const Image& sample : samples) {
    sims.push_back(cosine_similarity(ref, extractor.extract(sample)));
  }
  return sims;
}

double feat_i(const FeatureExtractor& extractor, const Image& reference,
              const std::vector<Image>& samples) {
  const std::vector<double> sims = reference_similarities(extractor, reference, samples);
  double total = 0.0;
  for (double s : sims) total += s;
  return total / static_cast<double>(sims.size());
}

double i_feat(const FeatureExtractor& extractor, const std::vector<Image>& samples) {
  if (samples.size() < 2) {
    throw std::invalid_argument("i_feat: need at least two samples");
  }
  std::vector<FeatureVector> features;
  features.reserve(samples.size());
  for (const Image& sample : samples) features.push_back(extractor.extract(sample));

  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      total += cosine_similarity(features[i], features[j]);
      ++pairs;
    }
  }
  return 1.0 - total / static_cast<double>(pairs);
}

std::string diversity_band(double diversity) {
  if (diversity < 0.18) return "stagnant";
  if (diversity <= 0.35) return "balanced";
  if (diversity > 0.45) return "divergent";
  return "intermediate";
}

EvalReport evaluate_samples(const FeatureExtractor& extractor, const Image& reference,
                            const std::vector<Image>& samples) {
  EvalReport report;
  report.n_samples = static_cast<int>(samples.size());
  report.extractor_descriptor = extractor.descriptor();
  report.per_sample_fidelity = reference_similarities(extractor, reference, samples);

  double mean = 0.0;
  for (double s : report.per_sample_fidelity) mean += s;
  mean /= static_cast<double>(report.per_sample_fidelity.size());
  double var = 0.0;
  for (double s : report.per_sample_fidelity) var += (s - mean) * (s - mean);
  var = report.per_sample_fidelity.size() > 1
            ? var / static_cast<double>(report.per_sample_fidelity.size() - 1)
            : 0.0;
  report.fidelity_mean = mean;
  report.fidelity_std = std::sqrt(var);

  if (samples.size() >= 2) {
    report.diversity = i_feat(extractor, samples);
    report.diversity_label = diversity_band(*report.diversity);
  }
  return report;
}

std::string render_eval_report(const EvalReport& report) {
  std::string out;
  out += "n_samples: " + std::to_string(report.n_samples) + "\n";
  out += "extractor: " + report.extractor_descriptor + "\n";
  out += "fidelity_mean: " + format_double(report.fidelity_mean) + "\n";
  out += "fidelity_std: " + format_double(report.fidelity_std) + "\n";
  if (report.diversity.has_value()) {
    out += "diversity: " + format_double(*report.diversity) + "\n";
    out += "diversity_band: " + report.diversity_label + "\n";
  }
  for (const auto& [key, value] : report.config_echo) {
    out += "config." + key + ": " + value + "\n";
  }
  return out;
}

std::string render_per_sample_table(const EvalReport& report,
                                    const std::vector<std::string>& sample_names) {
  if (sample_names.size() != report.per_sample_fidelity.size()) {
    throw std::invalid_argument("render_per_sample_table: name count mismatch");
  }
  std::string out = "sample,fidelity\n";
  for (std::size_t i = 0; i < sample_names.size(); ++i) {
    out += sample_names[i] + "," + format_double(report.per_sample_fidelity[i]) + "\n";
  }
  return out;
}

}  // namespace mg
