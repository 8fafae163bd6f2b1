#include <cmath>

#include "facecap/diffusion.hpp"

namespace facecap::diffusion {
namespace {

Matrix gaussian_like(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.data) v = nd(rng);
  return m;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Matrix denoise_step(DiffusionModel& model, const Matrix& x_t, const Matrix& c, std::size_t t,
                    std::mt19937_64& rng) {
  if (t < 1 || t > model.schedule.steps()) {
    throw DiffusionError("denoise_step: step " + std::to_string(t) + " outside [1, " +
                         std::to_string(model.schedule.steps()) + "]");
  }
  const Matrix x0_hat = model.denoiser.predict(x_t, c, t);
  if (t == 1) return posterior_step(model.schedule, x_t, x0_hat, t, nullptr);
  const Matrix z = gaussian_like(x_t.rows(), x_t.cols(), rng);
  return posterior_step(model.schedule, x_t, x0_hat, t, &z);
}

Matrix sample(DiffusionModel& model, const Matrix& c, std::uint64_t seed) {
  const Matrix cs = model.stats.apply(c);
  std::mt19937_64 rng(seed);
  Matrix x = gaussian_like(model.config.window, model.config.channels, rng);
  for (std::size_t t = model.schedule.steps(); t >= 1; --t) x = denoise_step(model, x, cs, t, rng);
  return x;
}

std::vector<std::size_t> window_starts(std::size_t frames, std::size_t window, std::size_t overlap) {
  if (window == 0) throw DiffusionError("window_starts: window must be positive");
  if (overlap >= window) throw DiffusionError("window_starts: overlap must be shorter than the window");
  if (frames <= window) return {0};
  const std::size_t step = window - overlap;
  std::vector<std::size_t> starts;
  std::size_t s = 0;
  for (; s + window < frames; s += step) starts.push_back(s);
  starts.push_back(frames - window);
  return starts;
}

double crossfade_weight(std::size_t k, std::size_t overlap_length) {
  return static_cast<double>(k + 1) / static_cast<double>(overlap_length + 1);
}

Matrix blend_windows(std::span<const Matrix> outputs, std::span<const std::size_t> starts,
                     std::size_t frames) {
  if (outputs.empty() || outputs.size() != starts.size()) {
    throw DiffusionError("blend_windows: need one start per window output");
  }
  const std::size_t cols = outputs.front().cols();
  Matrix out(frames, cols);
  std::size_t covered = 0;  // frames [0, covered) already written
  for (std::size_t w = 0; w < outputs.size(); ++w) {
    const Matrix& win = outputs[w];
    const std::size_t s = starts[w];
    if (win.cols() != cols) throw ad::ShapeError("blend_windows: windows differ in channel count");
    if (s > covered) throw DiffusionError("blend_windows: windows leave a gap");
    const std::size_t end = std::min(frames, s + win.rows());
    const std::size_t overlap = covered > s ? std::min(covered, end) - s : 0;
    for (std::size_t f = s; f < end; ++f) {
      for (std::size_t k = 0; k < cols; ++k) {
        const double v = win.at(f - s, k);
        if (f - s < overlap) {
          const double a = crossfade_weight(f - s, overlap);
          out.at(f, k) = (1.0 - a) * out.at(f, k) + a * v;
        } else {
          out.at(f, k) = v;
        }
      }
    }
    covered = std::max(covered, end);
  }
  if (covered < frames) throw DiffusionError("blend_windows: windows do not cover the sequence");
  return out;
}

std::uint64_t window_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(index));
}

Matrix windowed_inference(DiffusionModel& model, const Matrix& condition, std::size_t overlap,
                          std::uint64_t seed) {
  const std::size_t n = condition.rows();
  const std::size_t T = model.config.window;
  if (n == 0) throw DiffusionError("windowed_inference: empty condition");
  if (condition.cols() != model.config.condition_width()) {
    throw ad::ShapeError("windowed_inference: condition " + condition.shape_string() +
                         " does not match the model's width " +
                         std::to_string(model.config.condition_width()));
  }
  const auto starts = window_starts(std::max(n, T), T, overlap);
  std::vector<Matrix> outputs;
  for (std::size_t w = 0; w < starts.size(); ++w) {
    Matrix c(T, condition.cols());
    for (std::size_t r = 0; r < T; ++r) {
      const std::size_t src = std::min(starts[w] + r, n - 1);  // edge replication past the end
      for (std::size_t k = 0; k < c.cols(); ++k) c.at(r, k) = condition.at(src, k);
    }
    outputs.push_back(sample(model, c, window_seed(seed, w)));
  }
  Matrix full = blend_windows(outputs, starts, std::max(n, T));
  if (n < T) {
    Matrix cropped(n, full.cols());
    std::copy(full.data.begin(), full.data.begin() + static_cast<std::ptrdiff_t>(n * full.cols()),
              cropped.data.begin());
    return cropped;
  }
  return full;
}

}  // namespace facecap::diffusion
