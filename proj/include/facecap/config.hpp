#pragma once

// Top-level pipeline configuration, loaded from TOML or JSON.
//
//   seed = 0
//   [rig]          path (empty: built-in synthetic rig)
//   [simulation]   frames, style, amplitude, smoothing_n, denominator, orientation,
//                  head_amplitude, accel_noise, orientation_noise, lead_in_frames,
//                  tap_frame (-1 disables), tap_magnitude
//   [calibration]  acc_head_comp, threads
//   [stream]       host, port, sync_period_us, jitter_us, drop_fraction, speed,
//                  duration_ms, idle_timeout_ms, clock_offset_us, clock_drift_ppm
//   [model]        layers, d_model, heads, ff_width, window, channels, sensors, positional
//   [schedule]     steps, beta_start, beta_end
//   [training]     epochs, batch_size, stride, lr, beta1, beta2, eps, seed, eval_sequences
//   [inference]    overlap, seed
//
// Every key is optional; unknown keys are rejected.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "facecap/calib.hpp"
#include "facecap/diffusion.hpp"
#include "facecap/facesim.hpp"

namespace facecap {

struct SimulationSettings {
  std::size_t frames = 2000;
  facesim::WeightStyle style = facesim::WeightStyle::expression;
  double amplitude = 1.0;
  int smoothing_n = 2;
  facesim::DenominatorMode denominator = facesim::DenominatorMode::squared;
  facesim::OrientationMode orientation = facesim::OrientationMode::orthonormal;
  double head_amplitude = 0.0;     // rad
  double accel_noise = 0.0;        // m/s^2
  double orientation_noise = 0.0;  // rad
  std::size_t lead_in_frames = 90;  // neutral frames before the expression ramps in
  long long tap_frame = 45;         // < 0 disables the tap
  double tap_magnitude = 30.0;

  bool operator==(const SimulationSettings&) const = default;
};

struct CalibrationSettings {
  calib::AccHeadComp acc_head_comp = calib::AccHeadComp::literal;
  std::size_t threads = 0;

  bool operator==(const CalibrationSettings&) const = default;
};

struct StreamSettings {
  std::string host = "127.0.0.1";
  std::uint16_t port = 47500;
  double sync_period_us = 500'000.0;
  double jitter_us = 0.0;
  double drop_fraction = 0.0;
  double speed = 0.0;
  std::int64_t duration_ms = 30'000;
  std::int64_t idle_timeout_ms = 1'000;
  double clock_offset_us = 0.0;  // applied to every sensor by `replay`
  double clock_drift_ppm = 0.0;

  bool operator==(const StreamSettings&) const = default;
};

struct InferenceSettings {
  std::size_t overlap = 12;
  std::uint64_t seed = 0;

  bool operator==(const InferenceSettings&) const = default;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path rig_path;
  SimulationSettings simulation;
  CalibrationSettings calibration;
  StreamSettings stream;
  diffusion::TrainConfig training;
  std::size_t eval_sequences = 2;
  InferenceSettings inference;

  bool operator==(const PipelineConfig&) const = default;
};

/// Throws FormatError for malformed text or schema violations.
nlohmann::json parse_toml(const std::string& text);
PipelineConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const PipelineConfig& config);
std::string config_to_toml(const PipelineConfig& config);

/// Parser chosen by extension (.toml, otherwise JSON). Throws IoError when
/// the file or the configured rig file is missing.
PipelineConfig load_config(const std::filesystem::path& path);

calib::AccHeadComp parse_acc_head_comp(const std::string& s);
std::string to_string(calib::AccHeadComp m);
facesim::DenominatorMode parse_denominator(const std::string& s);
std::string to_string(facesim::DenominatorMode m);
facesim::OrientationMode parse_orientation(const std::string& s);
std::string to_string(facesim::OrientationMode m);

diffusion::TrainConfig train_config_from_document(const nlohmann::json& doc);
nlohmann::json train_config_to_document(const diffusion::TrainConfig& c);

}  // namespace facecap
