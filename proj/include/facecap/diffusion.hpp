#pragma once

// Conditional transformer denoiser over blendshape-weight windows.
//
// The network predicts the clean window x0 from (x_t, C, t); the reverse step
// samples x_{t-1} from the DDPM posterior q(x_{t-1} | x_t, x0_hat).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "facecap/autodiff/adam.hpp"
#include "facecap/autodiff/checkpoint.hpp"
#include "facecap/autodiff/ops.hpp"
#include "facecap/autodiff/tensor.hpp"
#include "facecap/facesim.hpp"
#include "facecap/imu.hpp"

namespace facecap::diffusion {

using Matrix = ad::Tensor<double>;

class DiffusionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- schedule

struct ScheduleConfig {
  std::size_t steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  bool operator==(const ScheduleConfig&) const = default;
};

/// Index 0 is the clean state: beta[0] = 0, alpha_bar[0] = 1.
struct DiffusionSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  std::size_t steps() const { return beta.empty() ? 0 : beta.size() - 1; }

  struct Posterior {
    double coef_x0;
    double coef_xt;
    double variance;
  };
  /// Coefficients of q(x_{t-1} | x_t, x0), 1 <= t <= steps.
  Posterior posterior(std::size_t t) const;
};

/// Linear beta ramp from beta_start (t = 1) to beta_end (t = steps).
DiffusionSchedule build_schedule(std::size_t steps, double beta_start, double beta_end);
inline DiffusionSchedule build_schedule(const ScheduleConfig& c) {
  return build_schedule(c.steps, c.beta_start, c.beta_end);
}

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
Matrix forward_diffuse(const DiffusionSchedule& s, const Matrix& x0, std::size_t t,
                       const Matrix& noise);

/// Posterior mean plus (for t > 1) sqrt(variance) * noise.
Matrix posterior_step(const DiffusionSchedule& s, const Matrix& x_t, const Matrix& x0_hat,
                      std::size_t t, const Matrix* noise);

// ---------------------------------------------------------------- denoiser

struct DenoiserConfig {
  std::size_t layers = 2;
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t ff_width = 64;
  std::size_t window = 24;     // T
  std::size_t channels = 8;    // m
  std::size_t sensors = kFacialSensorCount;
  bool positional = true;

  std::size_t condition_width() const { return 7 * sensors; }
  /// Throws DiffusionError.
  void validate() const;

  bool operator==(const DenoiserConfig&) const = default;
};

/// Sinusoidal features of the noise level, width `dim` (sin half, cos half).
std::vector<double> timestep_features(std::size_t t, std::size_t dim);

class Denoiser {
 public:
  explicit Denoiser(const DenoiserConfig& config, std::uint64_t seed = 0);

  const DenoiserConfig& config() const { return config_; }
  std::vector<ad::Parameter<double>*> parameters();
  std::vector<const ad::Parameter<double>*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// em(t) on `tape`, 1 x d_model.
  ad::Var<double> embed(ad::Tape<double>& tape, std::size_t t);
  /// x0 prediction, window x channels. x_t: window x channels, c: window x condition_width.
  ad::Var<double> forward(ad::Tape<double>& tape, const Matrix& x_t, const Matrix& c, std::size_t t);
  /// Same, with x_t and c already on the tape (used by gradient checks).
  ad::Var<double> forward(ad::Tape<double>& tape, ad::Var<double> x_t, ad::Var<double> c,
                          std::size_t t);
  Matrix predict(const Matrix& x_t, const Matrix& c, std::size_t t);

  ad::Parameter<double>& parameter(const std::string& name);

 private:
  struct Block {
    ad::Parameter<double> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, ff_w1, ff_b1,
        ff_w2, ff_b2;
  };
  DenoiserConfig config_;
  ad::Parameter<double> in_w_, in_b_, pos_, t_w1_, t_b1_, t_w2_, t_b2_, out_ln_g_, out_ln_b_, out_w_,
      out_b_;
  std::vector<Block> blocks_;
};

// ------------------------------------------------------------ conditions

/// Per-channel standardisation of condition matrices.
struct ConditionStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  Matrix apply(const Matrix& c) const;
  bool empty() const { return mean.empty(); }
};

/// N x (7 * sensors) rows [a(3), q(4)] for each listed sensor in order.
Matrix condition_matrix(const ImuSequence& seq, std::span<const std::size_t> sensors);
/// Facial sensors 1..count (the auxiliary sensor 0 is excluded).
std::vector<std::size_t> facial_sensor_ids(std::size_t count = kFacialSensorCount);

Matrix weights_matrix(const facesim::WeightSequence& w);
facesim::WeightSequence to_weight_sequence(const Matrix& m, double fps = kFrameRateHz);

ConditionStats compute_condition_stats(std::span<const Matrix> conditions);

struct SequencePair {
  Matrix condition;  // N x condition_width
  Matrix weights;    // N x channels
};

struct WindowSet {
  std::vector<Matrix> conditions;
  std::vector<Matrix> weights;
  std::size_t size() const { return conditions.size(); }
};

/// Windows of length `window` every `stride` frames; a final window is
/// right-aligned when the stride leaves a tail.
WindowSet make_windows(std::span<const SequencePair> pairs, std::size_t window, std::size_t stride);

// ------------------------------------------------------------------ model

struct DiffusionModel {
  DenoiserConfig config;
  ScheduleConfig schedule_config;
  Denoiser denoiser;
  DiffusionSchedule schedule;
  ConditionStats stats;

  explicit DiffusionModel(const DenoiserConfig& c, const ScheduleConfig& s = {},
                          std::uint64_t seed = 0);
};

ad::Checkpoint model_to_checkpoint(const DiffusionModel& model);
DiffusionModel model_from_checkpoint(const ad::Checkpoint& ckpt);
void save_model(const std::filesystem::path& path, const DiffusionModel& model);
DiffusionModel load_model(const std::filesystem::path& path);

/// One reverse step from x_t (condition already standardised).
Matrix denoise_step(DiffusionModel& model, const Matrix& x_t, const Matrix& c, std::size_t t,
                    std::mt19937_64& rng);

/// Ancestral sampling from Gaussian noise; `c` is a raw (unstandardised)
/// window x condition_width matrix. Deterministic per seed.
Matrix sample(DiffusionModel& model, const Matrix& c, std::uint64_t seed);

// --------------------------------------------------------------- training

struct TrainConfig {
  DenoiserConfig model;
  ScheduleConfig schedule;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::size_t stride = 12;
  ad::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig& o) const;
};

struct LossRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;  // NaN without an eval set
};

struct TrainResult {
  DiffusionModel model;
  std::vector<LossRecord> trace;
  std::size_t steps = 0;
};

/// Per-sample L1 objective: mean |x0_hat - w| with t and noise drawn from rng.
double training_loss(DiffusionModel& model, const Matrix& c_std, const Matrix& w, std::size_t t,
                     const Matrix& noise, bool accumulate_grad, double grad_scale = 1.0);

using EpochCallback = std::function<void(const LossRecord&)>;

/// Throws DiffusionError for an empty training set.
TrainResult train(std::span<const SequencePair> train_set, std::span<const SequencePair> eval_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Continues training `model` in place for config.epochs epochs.
std::vector<LossRecord> train_model(DiffusionModel& model, const WindowSet& train_windows,
                                    const WindowSet& eval_windows, const TrainConfig& config,
                                    const EpochCallback& on_epoch = {});

void save_loss_trace_csv(const std::filesystem::path& path, std::span<const LossRecord> trace);

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);
TrainConfig train_config_from_toml(const std::string& text);
/// Picks the parser from the extension (.toml, otherwise JSON).
TrainConfig load_train_config(const std::filesystem::path& path);

// -------------------------------------------------------------- inference

/// Window starts every window - overlap frames, the last one right-aligned.
std::vector<std::size_t> window_starts(std::size_t frames, std::size_t window, std::size_t overlap);

/// Crossfade weight of the incoming window at overlap position k (0-based)
/// of an overlap of length L: (k + 1) / (L + 1).
double crossfade_weight(std::size_t k, std::size_t overlap_length);

/// Blends per-window outputs placed at `starts` (each window x channels) into
/// a frames x channels matrix.
Matrix blend_windows(std::span<const Matrix> outputs, std::span<const std::size_t> starts,
                     std::size_t frames);

/// Seed of window `index` derived from the run seed.
std::uint64_t window_seed(std::uint64_t seed, std::size_t index);

/// N x condition_width condition -> N x channels weights.
Matrix windowed_inference(DiffusionModel& model, const Matrix& condition, std::size_t overlap,
                          std::uint64_t seed);

}  // namespace facecap::diffusion
