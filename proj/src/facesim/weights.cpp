#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "facecap/facesim.hpp"

namespace facecap::facesim {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// White noise blurred by a Gaussian kernel (sigma in frames), so its spectrum
// falls off as exp(-(2 pi f sigma)^2 / 2).
std::vector<double> smoothed_noise(std::size_t frames, double sigma_frames, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma_frames));
  std::vector<double> raw(frames + 2 * static_cast<std::size_t>(half));
  for (auto& v : raw) v = gauss(rng);
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  double ksum = 0.0;
  for (std::ptrdiff_t k = -half; k <= half; ++k) {
    const double x = static_cast<double>(k) / sigma_frames;
    kernel[static_cast<std::size_t>(k + half)] = std::exp(-0.5 * x * x);
    ksum += kernel[static_cast<std::size_t>(k + half)];
  }
  std::vector<double> out(frames, 0.0);
  for (std::size_t j = 0; j < frames; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * raw[j + k];
    out[j] = acc / ksum;
  }
  return out;
}

// Sum of random-phase sinusoids in [f_lo, f_hi] Hz plus a small amount of
// smoothed noise, rescaled to peak absolute value 1.
std::vector<double> band_limited(std::size_t frames, double fps, double f_lo, double f_hi,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(f_lo, f_hi);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::uniform_real_distribution<double> gain(0.4, 1.0);
  std::vector<double> s(frames, 0.0);
  for (int term = 0; term < 3; ++term) {
    const double f = freq(rng), p = phase(rng), g = gain(rng);
    for (std::size_t j = 0; j < frames; ++j) {
      s[j] += g * std::sin(kTwoPi * f * static_cast<double>(j) / fps + p);
    }
  }
  const auto noise = smoothed_noise(frames, 0.2 * fps, rng);
  for (std::size_t j = 0; j < frames; ++j) s[j] += 0.5 * noise[j];
  double peak = 0.0;
  for (double v : s) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (auto& v : s) v /= peak;
  }
  return s;
}

}  // namespace

WeightSequence generate_synthetic_weights(std::size_t channels, std::size_t frames,
                                          std::uint64_t seed,
                                          const SyntheticWeightOptions& options) {
  if (frames < 1) throw SimulationError("generate_synthetic_weights: need at least one frame");
  if (!options.active_channels.empty() && options.active_channels.size() != channels) {
    throw SimulationError("generate_synthetic_weights: channel mask size mismatch");
  }
  WeightSequence w(frames, channels);
  const double fps = w.fps();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> activity(0.5, 1.0);
  std::uniform_real_distribution<double> syllable(2.0, 3.0);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);

  for (std::size_t k = 0; k < channels; ++k) {
    // Draw per-channel randomness unconditionally so masking one channel does
    // not change the others.
    const double level = activity(rng);
    const double f_syl = syllable(rng);
    const double p_syl = phase(rng);
    std::vector<double> base;
    if (options.style == WeightStyle::expression) {
      base = band_limited(frames, fps, 0.2, 1.5, rng);
    } else {
      base = band_limited(frames, fps, 0.2, 1.0, rng);
    }
    const bool active = options.active_channels.empty() || options.active_channels[k];
    if (!active || options.amplitude == 0.0) continue;

    for (std::size_t j = 0; j < frames; ++j) {
      double v = 0.0;
      if (options.style == WeightStyle::expression) {
        // Squaring the [0, 1] envelope gives burst-like activations with a
        // relaxed baseline while keeping content below 3 Hz.
        const double e = 0.5 * (1.0 + base[j]);
        v = level * e * e;
      } else {
        const double t = static_cast<double>(j) / fps;
        v = level * (0.4 + 0.2 * base[j] + 0.2 * std::sin(kTwoPi * f_syl * t + p_syl));
      }
      w.at(j, k) = std::clamp(options.amplitude * v, 0.0, 1.0);
    }
  }
  return w;
}

WeightSequence with_neutral_lead_in(const WeightSequence& w, std::size_t lead_in, std::size_t ramp) {
  WeightSequence out(lead_in + w.frames(), w.channels(), w.fps());
  for (std::size_t j = 0; j < w.frames(); ++j) {
    const double env =
        j < ramp ? 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(j) / static_cast<double>(ramp)))
                 : 1.0;
    for (std::size_t k = 0; k < w.channels(); ++k) out.at(lead_in + j, k) = env * w.at(j, k);
  }
  return out;
}

WeightStyle parse_weight_style(const std::string& name) {
  if (name == "expression") return WeightStyle::expression;
  if (name == "speech") return WeightStyle::speech;
  throw std::invalid_argument("unknown weight style '" + name + "' (expression|speech)");
}

std::string to_string(WeightStyle style) {
  return style == WeightStyle::expression ? "expression" : "speech";
}

}  // namespace facecap::facesim
