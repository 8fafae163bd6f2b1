#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "facecap/calib.hpp"
#include "facecap/metrics.hpp"
#include "support.hpp"

using namespace facecap;
using namespace facecap::metrics;

namespace {

std::vector<Mesh> random_meshes(std::size_t frames, std::size_t verts, std::mt19937_64& rng) {
  std::vector<Mesh> out(frames, Mesh(verts));
  for (auto& m : out) {
    for (auto& v : m) v = testing::random_vec(rng, 10.0);
  }
  return out;
}

// Brute-force oracle: explicit per-frame loops, two-pass std.
struct Oracle {
  double mean, std_frames, std_pooled;
};

Oracle oracle(const std::vector<Mesh>& p, const std::vector<Mesh>& g, const std::vector<std::size_t>& idx) {
  std::vector<double> frame_means, all;
  for (std::size_t j = 0; j < p.size(); ++j) {
    double s = 0.0;
    for (std::size_t v : idx) {
      const double dx = p[j][v].x - g[j][v].x, dy = p[j][v].y - g[j][v].y, dz = p[j][v].z - g[j][v].z;
      const double e = std::sqrt(dx * dx + dy * dy + dz * dz);
      s += e;
      all.push_back(e);
    }
    frame_means.push_back(s / idx.size());
  }
  auto mean_std = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= xs.size();
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::pair{m, std::sqrt(v / xs.size())};
  };
  const auto [m, sf] = mean_std(frame_means);
  const auto [mp, sp] = mean_std(all);
  (void)mp;
  return {m, sf, sp};
}

std::vector<Mesh> rotate(const std::vector<Mesh>& ms, const RotationMatrix& r, const Vec3& t) {
  auto out = ms;
  for (auto& m : out) {
    for (auto& v : m) v = r * v + t;
  }
  return out;
}

}  // namespace

TEST_CASE("pve hand case") {
  const std::vector<Mesh> pred{{{3, 4, 0}, {1, 1, 1}}};
  const std::vector<Mesh> gt{{{0, 0, 0}, {1, 1, 1}}};
  const auto s = pve(pred, gt);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.std == 0.0);
  CHECK(pve(pred, gt, SpreadMode::pooled).std == doctest::Approx(2.5));
  const std::vector<std::size_t> lmk{0};
  CHECK(pve_lmk(pred, gt, lmk).mean == doctest::Approx(5.0));
}

TEST_CASE("pve and pve_lmk match brute force") {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_meshes(15, 40, rng);
    const auto g = random_meshes(15, 40, rng);
    std::vector<std::size_t> all(40), lmk;
    for (std::size_t v = 0; v < 40; ++v) {
      all[v] = v;
      if (v % 3 == 1) lmk.push_back(v);
    }
    const auto o = oracle(p, g, all);
    const auto a = pve(p, g);
    CHECK(std::abs(a.mean - o.mean) < 1e-9);
    CHECK(std::abs(a.std - o.std_frames) < 1e-9);
    CHECK(std::abs(pve(p, g, SpreadMode::pooled).std - o.std_pooled) < 1e-9);
    const auto ol = oracle(p, g, lmk);
    const auto l = pve_lmk(p, g, lmk);
    CHECK(std::abs(l.mean - ol.mean) < 1e-9);
    CHECK(std::abs(l.std - ol.std_frames) < 1e-9);
    CHECK(std::abs(pve_lmk(p, g, all).mean - a.mean) < 1e-12);
  }
}

TEST_CASE("pve errors") {
  std::mt19937_64 rng(82);
  const auto p = random_meshes(3, 5, rng);
  const auto g = random_meshes(4, 5, rng);
  CHECK_THROWS_AS(pve(p, g), MetricsError);
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(pve_lmk(p, p, none), MetricsError);
  const std::vector<std::size_t> bad{5};
  CHECK_THROWS_AS(pve_lmk(p, p, bad), MetricsError);
  CHECK(pve(p, p).mean == 0.0);
}

TEST_CASE("metrics are invariant to a shared rigid motion") {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_meshes(10, 30, rng);
    const auto g = random_meshes(10, 30, rng);
    const auto r = testing::random_rotation(rng);
    const Vec3 t = testing::random_vec(rng, 100.0);
    const auto a = pve(p, g);
    const auto b = pve(rotate(p, r, t), rotate(g, r, t));
    CHECK(std::abs(a.mean - b.mean) < 1e-9);
    CHECK(std::abs(a.std - b.std) < 1e-9);
  }
}

TEST_CASE("mse_weights") {
  facesim::WeightSequence gt(10, 4), pred(10, 4);
  std::mt19937_64 rng(84);
  std::uniform_real_distribution<double> u(0.0, 0.9);
  for (std::size_t k = 0; k < gt.values().size(); ++k) {
    gt.values()[k] = u(rng);
    pred.values()[k] = gt.values()[k] + 0.1;
  }
  CHECK(mse_weights(pred, gt) == doctest::Approx(0.01).epsilon(1e-12));
  for (double v : mse_trace(pred, gt)) CHECK(v == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(mse_weights(gt, gt) == 0.0);

  for (int trial = 0; trial < 10; ++trial) {
    double o = 0.0;
    for (std::size_t k = 0; k < gt.values().size(); ++k) {
      pred.values()[k] = u(rng);
      o += (pred.values()[k] - gt.values()[k]) * (pred.values()[k] - gt.values()[k]);
    }
    CHECK(std::abs(mse_weights(pred, gt) - o / 40.0) < 1e-9);
  }
  CHECK_THROWS_AS(mse_weights(pred, facesim::WeightSequence(10, 3)), MetricsError);
}

TEST_CASE("placement sensitivity") {
  std::vector<Vec3> constant(100, Vec3{0.0, 3.0, 4.0});
  CHECK(placement_sensitivity(constant) == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<Vec3> alt;
  for (int j = 0; j < 100; ++j) alt.push_back({j % 2 ? 2.0 : 0.0, 0.0, 0.0});
  CHECK(placement_sensitivity(alt) == doctest::Approx(1000.0));

  std::mt19937_64 rng(85);
  for (double amp : {0.5, 2.0}) {
    std::vector<Vec3> s;
    for (int j = 0; j < 600; ++j) {
      const double m = 5.0 + amp * std::sin(2 * M_PI * 1.5 * j / 60.0);
      s.push_back(testing::random_rotation(rng) * Vec3{m, 0.0, 0.0});
    }
    CHECK(std::abs(placement_sensitivity(s) / (amp * amp / 2 * 1e3) - 1.0) < 0.01);
  }
  CHECK_THROWS_AS(placement_sensitivity(std::vector<Vec3>(1)), MetricsError);
}

TEST_CASE("evaluate identical weights gives zeros") {
  const auto rig = facesim::make_synthetic_rig();
  const auto w = facesim::generate_synthetic_weights(8, 50, 3);
  const auto r = evaluate(rig, w, w);
  CHECK(r.pve_mean == 0.0);
  CHECK(r.pve_lmk_mean == 0.0);
  CHECK(r.mse == 0.0);
  CHECK(r.pve_trace.size() == 50);
}

TEST_CASE("report serialisation") {
  const auto rig = facesim::make_synthetic_rig();
  const auto gt = facesim::generate_synthetic_weights(8, 20, 4);
  auto pred = gt;
  for (auto& v : pred.values()) v *= 0.5;
  const auto r = evaluate(rig, pred, gt);
  CHECK(r.pve_mean > 0.0);
  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j.at("pve_mean_mm").get<double>() == doctest::Approx(r.pve_mean));
  CHECK(j.at("frames").get<std::size_t>() == 20);

  const auto path = std::filesystem::temp_directory_path() / "facecap_report_test.csv";
  save_report_csv(path, r);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  CHECK(line == "frame,pve,pve_lmk,mse");
  while (std::getline(in, line)) ++n;
  CHECK(n == 20);
  std::filesystem::remove(path);
}

TEST_CASE("placement table ranks zygomaticus above frontalis for a smile") {
  const auto rig = facesim::make_synthetic_rig();
  facesim::SyntheticWeightOptions opt;
  opt.active_channels.assign(8, false);
  opt.active_channels[4] = opt.active_channels[5] = true;
  const auto w = facesim::generate_synthetic_weights(8, 600, 11, opt);
  const auto sim = facesim::simulate_sequence(rig, w, {});
  const auto cal = calib::calibrate_sequence(sim.profile, sim.raw);
  const auto rows = placement_table(cal, &rig);
  REQUIRE(rows.size() == 12);
  double zyg_min = 1e300, front_max = 0.0;
  for (const auto& r : rows) {
    if (r.zone == facesim::kZoneZygomaticus) zyg_min = std::min(zyg_min, r.sensitivity);
    if (r.zone == facesim::kZoneFrontalis) front_max = std::max(front_max, r.sensitivity);
  }
  CHECK(zyg_min > front_max);
  const auto text = format_placement_table(rows);
  CHECK(text.find("zygomaticus") != std::string::npos);
  CHECK(nlohmann::json::parse(placement_table_to_json(rows)).size() == 12);
}
