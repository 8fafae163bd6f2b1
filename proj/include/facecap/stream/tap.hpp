#pragma once

// Tap-event detection on one sensor's acceleration magnitude series.

#include <cstddef>
#include <span>
#include <stdexcept>

#include "facecap/geom.hpp"

namespace facecap::stream {

class TapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TapOptions {
  std::size_t baseline_frames = 30;
  double k = 8.0;              // MAD multiple
  double min_deviation = 1.0;  // m/s^2; threshold floor for near-flat baselines
};

struct TapEvent {
  std::size_t frame = 0;  // first crossing
  double peak = 0.0;      // largest magnitude in the contiguous burst
};

/// First frame after the baseline window whose |mag - median| exceeds
/// max(k * MAD, min_deviation). Throws TapError when the series is shorter
/// than the baseline or no frame crosses.
TapEvent detect_tap(std::span<const double> magnitudes, const TapOptions& options = {});

TapEvent detect_tap(std::span<const Vec3> accelerations, const TapOptions& options = {});

}  // namespace facecap::stream
