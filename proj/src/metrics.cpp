#include "facecap/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace facecap::metrics {
namespace {

void check_frames(std::span<const Mesh> pred, std::span<const Mesh> gt) {
  if (pred.size() != gt.size()) {
    throw MetricsError("frame count mismatch: " + std::to_string(pred.size()) + " vs " +
                       std::to_string(gt.size()));
  }
  if (pred.empty()) throw MetricsError("no frames to compare");
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (pred[j].size() != gt[j].size()) {
      throw MetricsError("vertex count mismatch in frame " + std::to_string(j) + ": " +
                         std::to_string(pred[j].size()) + " vs " + std::to_string(gt[j].size()));
    }
  }
}

ErrorStats vertex_error(std::span<const Mesh> pred, std::span<const Mesh> gt,
                        std::span<const std::size_t> idx, SpreadMode mode) {
  ErrorStats s;
  s.per_frame.reserve(pred.size());
  double pooled_sum = 0.0, pooled_sq = 0.0, pooled_n = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    double acc = 0.0;
    for (std::size_t v : idx) {
      const double e = norm(pred[j][v] - gt[j][v]);
      acc += e;
      pooled_sum += e;
      pooled_sq += e * e;
    }
    pooled_n += static_cast<double>(idx.size());
    s.per_frame.push_back(acc / static_cast<double>(idx.size()));
  }
  double m = 0.0;
  for (double v : s.per_frame) m += v;
  m /= static_cast<double>(s.per_frame.size());
  s.mean = m;
  if (mode == SpreadMode::across_frames) {
    double var = 0.0;
    for (double v : s.per_frame) var += (v - m) * (v - m);
    s.std = std::sqrt(var / static_cast<double>(s.per_frame.size()));
  } else {
    const double pm = pooled_sum / pooled_n;
    s.std = std::sqrt(std::max(0.0, pooled_sq / pooled_n - pm * pm));
  }
  return s;
}

void check_weights(const facesim::WeightSequence& a, const facesim::WeightSequence& b) {
  if (a.frames() != b.frames() || a.channels() != b.channels()) {
    throw MetricsError("weight shape mismatch: " + std::to_string(a.frames()) + "x" +
                       std::to_string(a.channels()) + " vs " + std::to_string(b.frames()) + "x" +
                       std::to_string(b.channels()));
  }
  if (a.frames() == 0 || a.channels() == 0) throw MetricsError("empty weight sequences");
}

}  // namespace

ErrorStats pve(std::span<const Mesh> pred, std::span<const Mesh> gt, SpreadMode mode) {
  check_frames(pred, gt);
  if (pred.front().empty()) throw MetricsError("meshes have no vertices");
  std::vector<std::size_t> all(pred.front().size());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
  return vertex_error(pred, gt, all, mode);
}

ErrorStats pve_lmk(std::span<const Mesh> pred, std::span<const Mesh> gt,
                   std::span<const std::size_t> landmarks, SpreadMode mode) {
  check_frames(pred, gt);
  if (landmarks.empty()) throw MetricsError("empty landmark list");
  for (std::size_t v : landmarks) {
    if (v >= pred.front().size()) {
      throw MetricsError("landmark index " + std::to_string(v) + " out of range");
    }
  }
  return vertex_error(pred, gt, landmarks, mode);
}

std::vector<double> mse_trace(const facesim::WeightSequence& pred, const facesim::WeightSequence& gt) {
  check_weights(pred, gt);
  std::vector<double> out(pred.frames());
  for (std::size_t j = 0; j < pred.frames(); ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < pred.channels(); ++k) {
      const double d = pred.at(j, k) - gt.at(j, k);
      s += d * d;
    }
    out[j] = s / static_cast<double>(pred.channels());
  }
  return out;
}

double mse_weights(const facesim::WeightSequence& pred, const facesim::WeightSequence& gt) {
  check_weights(pred, gt);
  double s = 0.0;
  for (std::size_t k = 0; k < pred.values().size(); ++k) {
    const double d = pred.values()[k] - gt.values()[k];
    s += d * d;
  }
  return s / static_cast<double>(pred.values().size());
}

double placement_sensitivity(std::span<const Vec3> a) {
  if (a.size() < 2) throw MetricsError("placement_sensitivity needs at least two frames");
  double mean = 0.0;
  for (const auto& v : a) mean += norm(v);
  mean /= static_cast<double>(a.size());
  double var = 0.0;
  for (const auto& v : a) {
    const double d = norm(v) - mean;
    var += d * d;
  }
  return var / static_cast<double>(a.size()) * 1e3;
}

EvalReport evaluate(const facesim::BlendshapeRig& rig, const facesim::WeightSequence& pred,
                    const facesim::WeightSequence& gt, SpreadMode mode) {
  check_weights(pred, gt);
  const auto tp = facesim::trajectory_from_weights(rig, pred);
  const auto tg = facesim::trajectory_from_weights(rig, gt);
  EvalReport r;
  const auto p = pve(tp.frames, tg.frames, mode);
  r.pve_mean = p.mean;
  r.pve_std = p.std;
  r.pve_trace = p.per_frame;
  if (!rig.landmark_indices.empty()) {
    const auto l = pve_lmk(tp.frames, tg.frames, rig.landmark_indices, mode);
    r.pve_lmk_mean = l.mean;
    r.pve_lmk_std = l.std;
    r.pve_lmk_trace = l.per_frame;
  } else {
    r.pve_lmk_trace.assign(p.per_frame.size(), 0.0);
  }
  r.mse = mse_weights(pred, gt);
  r.mse_trace = mse_trace(pred, gt);
  return r;
}

void save_report_csv(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "frame,pve,pve_lmk,mse\n";
  out.precision(17);
  for (std::size_t j = 0; j < r.pve_trace.size(); ++j) {
    out << j << ',' << r.pve_trace[j] << ',' << r.pve_lmk_trace[j] << ',' << r.mse_trace[j] << '\n';
  }
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j{{"pve_mean_mm", r.pve_mean},         {"pve_std_mm", r.pve_std},
                   {"pve_lmk_mean_mm", r.pve_lmk_mean}, {"pve_lmk_std_mm", r.pve_lmk_std},
                   {"mse", r.mse},                      {"frames", r.pve_trace.size()}};
  return j.dump(2);
}

std::vector<PlacementRow> placement_table(const ImuSequence& seq, const facesim::BlendshapeRig* rig) {
  std::vector<PlacementRow> rows;
  for (std::size_t i = 0; i < seq.sensor_count(); ++i) {
    PlacementRow row;
    row.sensor_id = i;
    if (rig && i < rig->sensor_count()) row.zone = rig->anchor_for(i).zone;
    row.sensitivity = placement_sensitivity(seq.accelerations(i));
    rows.push_back(row);
  }
  return rows;
}

std::string format_placement_table(std::span<const PlacementRow> rows) {
  std::ostringstream os;
  os << "sensor  zone                 variation(x1e-3)\n";
  for (const auto& r : rows) {
    char line[96];
    std::snprintf(line, sizeof(line), "%-7zu %-20s %.3f\n", r.sensor_id,
                  r.zone.empty() ? "-" : r.zone.c_str(), r.sensitivity);
    os << line;
  }
  return os.str();
}

std::string placement_table_to_json(std::span<const PlacementRow> rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"sensor_id", r.sensor_id}, {"zone", r.zone}, {"sensitivity_1e3", r.sensitivity}});
  }
  return j.dump(2);
}

}  // namespace facecap::metrics
