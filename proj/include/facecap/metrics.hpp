#pragma once

// Evaluation statistics: per-vertex error (PVE), landmark error (PVE_LMK),
// blendshape-weight MSE and the placement-sensitivity statistic.

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "facecap/facesim.hpp"
#include "facecap/geom.hpp"
#include "facecap/imu.hpp"

namespace facecap::metrics {

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Mesh = std::vector<Vec3>;

enum class SpreadMode {
  across_frames,  // std of the per-frame means
  pooled,         // std over every (frame, vertex) error
};

struct ErrorStats {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_frame;
};

/// Mean Euclidean vertex distance per frame, in the meshes' units (mm).
ErrorStats pve(std::span<const Mesh> pred, std::span<const Mesh> gt,
               SpreadMode mode = SpreadMode::across_frames);

/// pve restricted to `landmarks`; an empty list is an error.
ErrorStats pve_lmk(std::span<const Mesh> pred, std::span<const Mesh> gt,
                   std::span<const std::size_t> landmarks,
                   SpreadMode mode = SpreadMode::across_frames);

double mse_weights(const facesim::WeightSequence& pred, const facesim::WeightSequence& gt);
/// Per-frame mean squared weight error.
std::vector<double> mse_trace(const facesim::WeightSequence& pred, const facesim::WeightSequence& gt);

/// Population variance of |a| over the clip, in units of 1e-3 (m/s^2)^2
/// (a variance of 1 reports as 1000). Needs at least two frames.
double placement_sensitivity(std::span<const Vec3> accelerations);

struct EvalReport {
  double pve_mean = 0.0, pve_std = 0.0;
  double pve_lmk_mean = 0.0, pve_lmk_std = 0.0;
  double mse = 0.0;
  std::vector<double> pve_trace, pve_lmk_trace, mse_trace;
};

/// Meshes from both weight sequences on `rig` (no head motion), then all
/// three metrics.
EvalReport evaluate(const facesim::BlendshapeRig& rig, const facesim::WeightSequence& pred,
                    const facesim::WeightSequence& gt, SpreadMode mode = SpreadMode::across_frames);

/// CSV: frame,pve,pve_lmk,mse.
void save_report_csv(const std::filesystem::path& path, const EvalReport& report);
std::string report_to_json(const EvalReport& report);

struct PlacementRow {
  std::size_t sensor_id = 0;
  std::string zone;
  double sensitivity = 0.0;  // x 1e-3 units
};

/// One row per sensor of `seq` (auxiliary included); zones come from the rig
/// anchors when given.
std::vector<PlacementRow> placement_table(const ImuSequence& seq,
                                          const facesim::BlendshapeRig* rig = nullptr);
std::string format_placement_table(std::span<const PlacementRow> rows);
std::string placement_table_to_json(std::span<const PlacementRow> rows);

}  // namespace facecap::metrics
