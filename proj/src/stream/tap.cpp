#include "facecap/stream/tap.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace facecap::stream {
namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

TapEvent detect_tap(std::span<const double> mags, const TapOptions& opt) {
  if (opt.baseline_frames == 0) throw TapError("detect_tap: baseline window is empty");
  if (mags.size() <= opt.baseline_frames) {
    throw TapError("detect_tap: need more than " + std::to_string(opt.baseline_frames) +
                   " frames, got " + std::to_string(mags.size()));
  }
  std::vector<double> base(mags.begin(),
                           mags.begin() + static_cast<std::ptrdiff_t>(opt.baseline_frames));
  const double med = median(base);
  for (auto& b : base) b = std::abs(b - med);
  const double mad = median(base);
  const double threshold = std::max(opt.k * mad, opt.min_deviation);

  for (std::size_t j = opt.baseline_frames; j < mags.size(); ++j) {
    if (std::abs(mags[j] - med) > threshold) {
      TapEvent ev{j, mags[j]};
      for (std::size_t m = j + 1; m < mags.size() && std::abs(mags[m] - med) > threshold; ++m) {
        ev.peak = std::max(ev.peak, mags[m]);
      }
      return ev;
    }
  }
  throw TapError("detect_tap: no tap found");
}

TapEvent detect_tap(std::span<const Vec3> accelerations, const TapOptions& options) {
  std::vector<double> mags;
  mags.reserve(accelerations.size());
  for (const auto& a : accelerations) mags.push_back(norm(a));
  return detect_tap(std::span<const double>(mags), options);
}

}  // namespace facecap::stream
