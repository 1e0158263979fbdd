#include "mg/tiny_denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mg/checkpoint.hpp"
#include "mg/errors.hpp"

namespace mg {

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;

void require_positive(int v, const char* what) {
  if (v < 1) throw std::invalid_argument(std::string("TinyDenoiser: ") + what + " must be >= 1");
}

}  // namespace

TinyDenoiser::TinyDenoiser(int height, int width, int hidden1, int hidden2,
                           Activation activation)
    : height_(height), width_(width), hidden1_(hidden1), hidden2_(hidden2),
      activation_(activation) {
  require_positive(height, "height");
  require_positive(width, "width");
  require_positive(hidden1, "hidden1");
  require_positive(hidden2, "hidden2");
  w1.assign(static_cast<std::size_t>(hidden1_) * input_dim(), 0.0);
  b1.assign(hidden1_, 0.0);
  w2.assign(static_cast<std::size_t>(hidden2_) * hidden1_, 0.0);
  b2.assign(hidden2_, 0.0);
  w3.assign(static_cast<std::size_t>(output_dim()) * hidden2_, 0.0);
  b3.assign(output_dim(), 0.0);
}

TinyDenoiser TinyDenoiser::random_init(int height, int width, int hidden1, int hidden2,
                                       std::uint64_t seed, Activation activation) {
  TinyDenoiser model(height, width, hidden1, hidden2, activation);
  RngStream rng(seed);
  auto fill = [&rng](std::vector<double>& w, int fan_in) {
    const double bound = std::sqrt(3.0 / fan_in);
    for (double& v : w) v = bound * (2.0 * rng.uniform() - 1.0);
  };
  fill(model.w1, model.input_dim());
  fill(model.w2, hidden1);
  fill(model.w3, hidden2);
  return model;
}

std::vector<double> TinyDenoiser::time_embedding(int t, int T) {
  std::vector<double> emb(kTimeEmbedDim);
  const double tau = static_cast<double>(t) / static_cast<double>(T);
  double omega = kPi;
  for (int k = 0; k < kTimeFrequencies; ++k) {
    emb[2 * k] = std::sin(omega * tau);
    emb[2 * k + 1] = std::cos(omega * tau);
    omega *= 2.0;
  }
  return emb;
}

double TinyDenoiser::activate(double x) const {
  return activation_ == Activation::kTanh ? std::tanh(x) : x;
}

double TinyDenoiser::activate_derivative(double pre) const {
  if (activation_ == Activation::kIdentity) return 1.0;
  const double th = std::tanh(pre);
  return 1.0 - th * th;
}

std::vector<double> TinyDenoiser::make_input(const LatentState& state,
                                             const NoiseSchedule& schedule) const {
  if (state.z.height != height_ || state.z.width != width_) {
    throw std::invalid_argument("TinyDenoiser: input image " + std::to_string(state.z.height) +
                                "x" + std::to_string(state.z.width) + " does not match declared " +
                                std::to_string(height_) + "x" + std::to_string(width_));
  }
  std::vector<double> input(input_dim());
  std::copy(state.z.data.begin(), state.z.data.end(), input.begin());
  const std::vector<double> emb = time_embedding(state.t, schedule.T);
  std::copy(emb.begin(), emb.end(), input.begin() + state.z.pixels());
  return input;
}

void TinyDenoiser::forward_impl(const std::vector<double>& input, std::vector<double>& pre1,
                                std::vector<double>& act1, std::vector<double>& pre2,
                                std::vector<double>& act2, std::vector<double>& out) const {
  const int in = input_dim();
  pre1.assign(hidden1_, 0.0);
  for (int r = 0; r < hidden1_; ++r) {
    double s = b1[r];
    const double* row = &w1[static_cast<std::size_t>(r) * in];
    for (int c = 0; c < in; ++c) s += row[c] * input[c];
    pre1[r] = s;
  }
  act1.resize(hidden1_);
  for (int r = 0; r < hidden1_; ++r) act1[r] = activate(pre1[r]);

  pre2.assign(hidden2_, 0.0);
  for (int r = 0; r < hidden2_; ++r) {
    double s = b2[r];
    const double* row = &w2[static_cast<std::size_t>(r) * hidden1_];
    for (int c = 0; c < hidden1_; ++c) s += row[c] * act1[c];
    pre2[r] = s;
  }
  act2.resize(hidden2_);
  for (int r = 0; r < hidden2_; ++r) act2[r] = activate(pre2[r]);

  const int out_dim = output_dim();
  out.assign(out_dim, 0.0);
  for (int r = 0; r < out_dim; ++r) {
    double s = b3[r];
    const double* row = &w3[static_cast<std::size_t>(r) * hidden2_];
    for (int c = 0; c < hidden2_; ++c) s += row[c] * act2[c];
    out[r] = s;
  }
}

Image TinyDenoiser::predict(const LatentState& state, const NoiseSchedule& schedule) const {
  const std::vector<double> input = make_input(state, schedule);
  std::vector<double> pre1, act1, pre2, act2, out;
  forward_impl(input, pre1, act1, pre2, act2, out);
  Image eps(height_, width_);
  std::copy(out.begin(), out.end(), eps.data.begin());
  return eps;
}

TinyDenoiser::Gradients TinyDenoiser::backward(const LatentState& state,
                                               const NoiseSchedule& schedule,
                                               const Image& upstream, Image* input_grad) const {
  if (upstream.height != height_ || upstream.width != width_) {
    throw std::invalid_argument("TinyDenoiser::backward: upstream shape mismatch");
  }
  const std::vector<double> input = make_input(state, schedule);
  std::vector<double> pre1, act1, pre2, act2, out;
  forward_impl(input, pre1, act1, pre2, act2, out);

  const int in = input_dim();
  const int out_dim = output_dim();

  Gradients g;
  g.w1.assign(w1.size(), 0.0);
  g.b1.assign(b1.size(), 0.0);
  g.w2.assign(w2.size(), 0.0);
  g.b2.assign(b2.size(), 0.0);
  g.w3.assign(w3.size(), 0.0);
  g.b3.assign(b3.size(), 0.0);

  // Layer 3 (linear output): d/dw3[r,c] = upstream[r] * act2[c].
  std::vector<double> d_act2(hidden2_, 0.0);
  for (int r = 0; r < out_dim; ++r) {
    const double u = upstream.data[r];
    g.b3[r] = u;
    double* wrow = &g.w3[static_cast<std::size_t>(r) * hidden2_];
    const double* row = &w3[static_cast<std::size_t>(r) * hidden2_];
    for (int c = 0; c < hidden2_; ++c) {
      wrow[c] = u * act2[c];
      d_act2[c] += u * row[c];
    }
  }

  std::vector<double> d_pre2(hidden2_);
  for (int r = 0; r < hidden2_; ++r) d_pre2[r] = d_act2[r] * activate_derivative(pre2[r]);

  std::vector<double> d_act1(hidden1_, 0.0);
  for (int r = 0; r < hidden2_; ++r) {
    const double u = d_pre2[r];
    g.b2[r] = u;
    double* wrow = &g.w2[static_cast<std::size_t>(r) * hidden1_];
    const double* row = &w2[static_cast<std::size_t>(r) * hidden1_];
    for (int c = 0; c < hidden1_; ++c) {
      wrow[c] = u * act1[c];
      d_act1[c] += u * row[c];
    }
  }

  std::vector<double> d_pre1(hidden1_);
  for (int r = 0; r < hidden1_; ++r) d_pre1[r] = d_act1[r] * activate_derivative(pre1[r]);

  std::vector<double> d_input(in, 0.0);
  for (int r = 0; r < hidden1_; ++r) {
    const double u = d_pre1[r];
    g.b1[r] = u;
    double* wrow = &g.w1[static_cast<std::size_t>(r) * in];
    const double* row = &w1[static_cast<std::size_t>(r) * in];
    for (int c = 0; c < in; ++c) {
      wrow[c] = u * input[c];
      d_input[c] += u * row[c];
    }
  }

  if (input_grad != nullptr) {
    // Only the image slice of the input carries gradient back to z_t; the
    // time embedding is a function of t, not of z_t.
    *input_grad = Image(height_, width_);
    std::copy(d_input.begin(), d_input.begin() + height_ * width_, input_grad->data.begin());
  }
  return g;
}

Image TinyDenoiser::predict_input_vjp(const LatentState& state, const NoiseSchedule& schedule,
                                      const Image& upstream) const {
  Image input_grad;
  backward(state, schedule, upstream, &input_grad);
  return input_grad;
}

void TinyDenoiser::apply_update(const Gradients& grads, double lr) {
  auto axpy = [lr](std::vector<double>& w, const std::vector<double>& g) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
  };
  axpy(w1, grads.w1);
  axpy(b1, grads.b1);
  axpy(w2, grads.w2);
  axpy(b2, grads.b2);
  axpy(w3, grads.w3);
  axpy(b3, grads.b3);
}

void TinyDenoiser::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt["meta"] = TensorEntry{{6},
                             {static_cast<double>(height_), static_cast<double>(width_),
                              static_cast<double>(hidden1_), static_cast<double>(hidden2_),
                              activation_ == Activation::kTanh ? 0.0 : 1.0,
                              static_cast<double>(kTimeFrequencies)}};
  const auto in = static_cast<std::uint64_t>(input_dim());
  const auto out = static_cast<std::uint64_t>(output_dim());
  ckpt["w1"] = TensorEntry{{static_cast<std::uint64_t>(hidden1_), in}, w1};
  ckpt["b1"] = TensorEntry{{static_cast<std::uint64_t>(hidden1_)}, b1};
  ckpt["w2"] = TensorEntry{{static_cast<std::uint64_t>(hidden2_),
                            static_cast<std::uint64_t>(hidden1_)}, w2};
  ckpt["b2"] = TensorEntry{{static_cast<std::uint64_t>(hidden2_)}, b2};
  ckpt["w3"] = TensorEntry{{out, static_cast<std::uint64_t>(hidden2_)}, w3};
  ckpt["b3"] = TensorEntry{{out}, b3};
  save_checkpoint(path, ckpt);
}

TinyDenoiser TinyDenoiser::load(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const auto meta_it = ckpt.find("meta");
  if (meta_it == ckpt.end() || meta_it->second.data.size() != 6) {
    throw ParseError(path + ": missing or malformed denoiser meta tensor", 0);
  }
  const auto& meta = meta_it->second.data;
  if (meta[5] != static_cast<double>(kTimeFrequencies)) {
    throw ParseError(path + ": incompatible time embedding size", 0);
  }
  TinyDenoiser model(static_cast<int>(meta[0]), static_cast<int>(meta[1]),
                     static_cast<int>(meta[2]), static_cast<int>(meta[3]),
                     meta[4] == 0.0 ? Activation::kTanh : Activation::kIdentity);
  auto take = [&ckpt, &path](const char* name, std::vector<double>& dst) {
    const auto it = ckpt.find(name);
    if (it == ckpt.end() || it->second.data.size() != dst.size()) {
      throw ParseError(path + ": missing or misshaped tensor '" + name + "'", 0);
    }
    dst = it->second.data;
  };
  take("w1", model.w1);
  take("b1", model.b1);
  take("w2", model.w2);
  take("b2", model.b2);
  take("w3", model.w3);
  take("b3", model.b3);
  return model;
}

TrainReport train_denoiser(TinyDenoiser& model, const std::vector<Image>& dataset,
                           const NoiseSchedule& schedule, const TrainOptions& options,
                           RngStream& rng) {
  if (dataset.empty()) throw std::invalid_argument("train_denoiser: empty dataset");
  for (const auto& img : dataset) {
    if (img.height != model.height() || img.width != model.width()) {
      throw std::invalid_argument("train_denoiser: dataset shape does not match model");
    }
  }
  if (options.steps < 0) throw std::invalid_argument("train_denoiser: steps must be >= 0");

  const int out_dim = model.output_dim();

  // Fixed validation batch drawn from a stream derived once from rng, so the
  // training draws themselves stay reproducible.
  RngStream val_rng(rng.next_u64());
  struct ValSample {
    LatentState state;
    Image eps;
  };
  std::vector<ValSample> val;
  val.reserve(options.val_batch);
  for (int i = 0; i < options.val_batch; ++i) {
    const std::size_t idx = static_cast<std::size_t>(val_rng.uniform() * dataset.size());
    const int t = 1 + static_cast<int>(val_rng.uniform() * schedule.T);
    ForwardSample fs = q_sample(dataset[idx], std::min(t, schedule.T), schedule, val_rng);
    val.push_back({std::move(fs.state), std::move(fs.eps)});
  }

  auto val_loss = [&]() {
    double total = 0.0;
    for (const auto& sample : val) {
      const Image pred = model.predict(sample.state, schedule);
      total += squared_distance(pred, sample.eps) / out_dim;
    }
    return total / static_cast<double>(val.size());
  };

  TrainReport report;
  report.initial_val_loss = val_loss();
  report.val_loss.emplace_back(0, report.initial_val_loss);

  for (int step = 1; step <= options.steps; ++step) {
    const std::size_t idx = static_cast<std::size_t>(rng.uniform() * dataset.size());
    const int t = std::min(1 + static_cast<int>(rng.uniform() * schedule.T), schedule.T);
    const ForwardSample fs = q_sample(dataset[idx], t, schedule, rng);

    const Image pred = model.predict(fs.state, schedule);
    double loss = 0.0;
    Image upstream(model.height(), model.width());
    for (int n = 0; n < out_dim; ++n) {
      const double diff = pred.data[n] - fs.eps.data[n];
      loss += diff * diff;
      upstream.data[n] = 2.0 * diff / out_dim;
    }
    loss /= out_dim;
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train_denoiser: non-finite loss at step " + std::to_string(step) +
                               " (lr=" + std::to_string(options.lr) + "); training diverged");
    }
    report.step_loss.push_back(loss);

    if (options.lr != 0.0) {
      const TinyDenoiser::Gradients grads = model.backward(fs.state, schedule, upstream);
      model.apply_update(grads, options.lr);
    }

    if (options.val_every > 0 && step % options.val_every == 0) {
      report.val_loss.emplace_back(step, val_loss());
    }
  }

  report.final_val_loss = val_loss();
  report.val_loss.emplace_back(options.steps, report.final_val_loss);
  return report;
}

}  // namespace mg
