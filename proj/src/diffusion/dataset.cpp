#include <cmath>

#include "facecap/diffusion.hpp"

namespace facecap::diffusion {

std::vector<std::size_t> facial_sensor_ids(std::size_t count) {
  std::vector<std::size_t> ids(count);
  for (std::size_t i = 0; i < count; ++i) ids[i] = i + 1;
  return ids;
}

Matrix condition_matrix(const ImuSequence& seq, std::span<const std::size_t> sensors) {
  Matrix c(seq.frame_count(), 7 * sensors.size());
  for (std::size_t j = 0; j < seq.frame_count(); ++j) {
    const auto& f = seq.frames[j];
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      if (sensors[s] >= f.sensors.size()) {
        throw DiffusionError("condition_matrix: frame " + std::to_string(j) + " lacks sensor " +
                             std::to_string(sensors[s]));
      }
      const auto& smp = f.sensors[sensors[s]];
      const double row[7] = {smp.acceleration.x, smp.acceleration.y, smp.acceleration.z,
                             smp.orientation.w,  smp.orientation.x,  smp.orientation.y,
                             smp.orientation.z};
      for (std::size_t k = 0; k < 7; ++k) c.at(j, 7 * s + k) = row[k];
    }
  }
  return c;
}

Matrix weights_matrix(const facesim::WeightSequence& w) {
  return Matrix({w.frames(), w.channels()}, w.values());
}

facesim::WeightSequence to_weight_sequence(const Matrix& m, double fps) {
  facesim::WeightSequence w(m.rows(), m.cols(), fps);
  w.values() = m.data;
  return w;
}

ConditionStats compute_condition_stats(std::span<const Matrix> conditions) {
  if (conditions.empty()) throw DiffusionError("condition stats: no data");
  const std::size_t width = conditions.front().cols();
  ConditionStats s;
  s.mean.assign(width, 0.0);
  s.stddev.assign(width, 0.0);
  double n = 0.0;
  for (const auto& c : conditions) {
    if (c.cols() != width) throw ad::ShapeError("condition stats: mixed condition widths");
    for (std::size_t r = 0; r < c.rows(); ++r) {
      for (std::size_t k = 0; k < width; ++k) s.mean[k] += c.at(r, k);
    }
    n += static_cast<double>(c.rows());
  }
  if (n == 0.0) throw DiffusionError("condition stats: no frames");
  for (auto& m : s.mean) m /= n;
  for (const auto& c : conditions) {
    for (std::size_t r = 0; r < c.rows(); ++r) {
      for (std::size_t k = 0; k < width; ++k) {
        const double d = c.at(r, k) - s.mean[k];
        s.stddev[k] += d * d;
      }
    }
  }
  for (auto& v : s.stddev) {
    v = std::sqrt(v / n);
    if (v < 1e-6) v = 1.0;  // constant channel: centre only
  }
  return s;
}

Matrix ConditionStats::apply(const Matrix& c) const {
  if (empty()) return c;
  if (c.cols() != mean.size()) {
    throw ad::ShapeError("condition has " + std::to_string(c.cols()) + " columns, stats cover " +
                         std::to_string(mean.size()));
  }
  Matrix out = c;
  for (std::size_t r = 0; r < c.rows(); ++r) {
    for (std::size_t k = 0; k < c.cols(); ++k) out.at(r, k) = (c.at(r, k) - mean[k]) / stddev[k];
  }
  return out;
}

namespace {

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(count, m.cols());
  std::copy(m.data.begin() + static_cast<std::ptrdiff_t>(begin * m.cols()),
            m.data.begin() + static_cast<std::ptrdiff_t>((begin + count) * m.cols()), out.data.begin());
  return out;
}

}  // namespace

WindowSet make_windows(std::span<const SequencePair> pairs, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw DiffusionError("make_windows: window and stride must be positive");
  WindowSet set;
  for (const auto& p : pairs) {
    if (p.condition.rows() != p.weights.rows()) {
      throw DiffusionError("make_windows: condition has " + std::to_string(p.condition.rows()) +
                           " frames but weights have " + std::to_string(p.weights.rows()));
    }
    const std::size_t n = p.condition.rows();
    if (n < window) continue;
    std::size_t s = 0;
    for (; s + window <= n; s += stride) {
      set.conditions.push_back(rows_of(p.condition, s, window));
      set.weights.push_back(rows_of(p.weights, s, window));
    }
    if (s - stride + window < n) {
      set.conditions.push_back(rows_of(p.condition, n - window, window));
      set.weights.push_back(rows_of(p.weights, n - window, window));
    }
  }
  return set;
}

}  // namespace facecap::diffusion
