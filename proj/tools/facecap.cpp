// facecap: command-line front end for the capture pipeline.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "facecap/calib.hpp"
#include "facecap/config.hpp"
#include "facecap/diffusion.hpp"
#include "facecap/facesim.hpp"
#include "facecap/imu.hpp"
#include "facecap/metrics.hpp"
#include "facecap/stream/ingest.hpp"
#include "facecap/stream/replay.hpp"

namespace fs = std::filesystem;
using namespace facecap;

namespace {

enum ExitCode : int {
  kOk = 0,
  kGeneric = 1,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kSocket = 5,
  kComputation = 6,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int report_error(int code, const char* kind, const std::string& msg) {
  std::string clean;
  for (char c : msg) {
    if (c == '"' || c == '\\') clean += '\\';
    clean += (c == '\n' || c == '\r') ? ' ' : c;
  }
  std::cerr << "error code=" << code << " kind=" << kind << " msg=\"" << clean << "\"\n";
  return code;
}

struct Globals {
  fs::path config_path;
  std::optional<std::uint64_t> seed;
  bool paper_literal = false;
  bool quiet = false;
};

std::optional<std::uint64_t> env_u64(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  std::uint64_t out = 0;
  const std::string s(v);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw UsageError(std::string(name) + " must be a non-negative integer, got '" + s + "'");
  }
  return out;
}

// Precedence: command-line flag > environment > config file > built-in default.
PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (auto s = env_u64("FACECAP_SEED")) c.seed = *s;
  if (auto p = env_u64("FACECAP_PORT")) {
    if (*p > 65535) throw UsageError("FACECAP_PORT out of range");
    c.stream.port = static_cast<std::uint16_t>(*p);
  }
  if (g.seed) c.seed = *g.seed;
  if (g.paper_literal) {
    c.simulation.denominator = facesim::DenominatorMode::paper_literal;
    c.simulation.orientation = facesim::OrientationMode::paper_literal;
  }
  return c;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

facesim::BlendshapeRig load_rig_or_default(const fs::path& p) {
  return p.empty() ? facesim::make_synthetic_rig() : facesim::load_rig(p);
}

std::vector<Vec3> read_mag_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<Vec3> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v[3];
    const char* cur = line.data();
    const char* end = line.data() + line.size();
    bool ok = true;
    for (int k = 0; k < 3 && ok; ++k) {
      while (cur < end && (*cur == ' ' || *cur == '\t')) ++cur;
      const auto r = std::from_chars(cur, end, v[k]);
      ok = r.ec == std::errc{};
      cur = r.ptr;
      while (cur < end && (*cur == ' ' || *cur == '\t')) ++cur;
      if (k < 2 && ok) ok = cur < end && *cur++ == ',';
    }
    if (ok && cur != end) ok = false;
    if (!ok) {
      if (lineno == 1 && out.empty()) continue;  // header
      throw FormatError(p.string() + ":" + std::to_string(lineno) + ": expected three numbers x,y,z");
    }
    out.push_back({v[0], v[1], v[2]});
  }
  return out;
}

std::vector<bool> channel_mask(const facesim::BlendshapeRig& rig, const std::string& names) {
  if (names.empty()) return {};
  std::vector<bool> mask(rig.blendshape_count(), false);
  std::stringstream ss(names);
  std::string name;
  while (std::getline(ss, name, ',')) {
    bool found = false;
    for (std::size_t k = 0; k < rig.blendshape_count(); ++k) {
      if (k < rig.blendshape_names.size() && rig.blendshape_names[k] == name) {
        mask[k] = true;
        found = true;
      }
    }
    if (!found) throw UsageError("unknown blendshape '" + name + "'");
  }
  return mask;
}

// ------------------------------------------------------------- subcommands

struct MagOpts {
  fs::path input, output;
};

int run_mag_calibrate(const MagOpts& o) {
  const auto samples = read_mag_csv(o.input);
  const auto c = calib::mag_calibrate(samples);
  const std::string text = calib::mag_calibration_to_json(c);
  if (o.output.empty()) std::cout << text << '\n';
  else write_text(o.output, text);
  return kOk;
}

struct SimOpts {
  fs::path out_dir = ".";
  std::string prefix = "capture";
  std::optional<std::size_t> frames;
  std::optional<std::string> style;
  std::string channels;
  std::optional<double> head_amplitude, accel_noise, orientation_noise;
  std::optional<std::size_t> lead_in;
  std::optional<long long> tap_frame;
  bool no_tap = false;
  fs::path rig, write_rig, write_trajectory;
};

int run_simulate(const Globals& g, const SimOpts& o) {
  PipelineConfig cfg = resolve_config(g);
  auto& s = cfg.simulation;
  if (o.frames) s.frames = *o.frames;
  if (o.style) s.style = facesim::parse_weight_style(*o.style);
  if (o.head_amplitude) s.head_amplitude = *o.head_amplitude;
  if (o.accel_noise) s.accel_noise = *o.accel_noise;
  if (o.orientation_noise) s.orientation_noise = *o.orientation_noise;
  if (o.lead_in) s.lead_in_frames = *o.lead_in;
  if (o.tap_frame) s.tap_frame = *o.tap_frame;
  if (o.no_tap) s.tap_frame = -1;
  const fs::path rig_path = o.rig.empty() ? cfg.rig_path : o.rig;
  const auto rig = load_rig_or_default(rig_path);

  facesim::SyntheticWeightOptions wopt;
  wopt.style = s.style;
  wopt.amplitude = s.amplitude;
  wopt.active_channels = channel_mask(rig, o.channels);
  const auto body = facesim::generate_synthetic_weights(rig.blendshape_count(), s.frames, cfg.seed, wopt);
  const auto w = facesim::with_neutral_lead_in(body, s.lead_in_frames, s.lead_in_frames);

  std::vector<RotationMatrix> head;
  if (s.head_amplitude > 0.0) {
    head = facesim::generate_head_motion(w.frames(), cfg.seed + 1, s.head_amplitude);
  }
  facesim::SimulationConfig sc;
  sc.smoothing_n = s.smoothing_n;
  sc.denominator = s.denominator;
  sc.orientation = s.orientation;
  sc.noise = {s.accel_noise, s.orientation_noise, cfg.seed + 2};
  if (s.tap_frame >= 0) sc.tap_frame = static_cast<std::size_t>(s.tap_frame);
  sc.tap_magnitude = s.tap_magnitude;
  const auto result = facesim::simulate_sequence(rig, w, head, sc);

  const fs::path base = o.out_dir / o.prefix;
  fs::create_directories(o.out_dir);
  save_sequence(base.string() + ".raw.jsonl", result.raw);
  facesim::save_weights_csv(base.string() + ".weights.csv", w);
  calib::save_profile(base.string() + ".profile.json", result.profile);
  if (!o.write_rig.empty()) {
    ensure_parent(o.write_rig);
    facesim::save_rig(o.write_rig, rig);
  }
  if (!o.write_trajectory.empty()) {
    ensure_parent(o.write_trajectory);
    facesim::save_trajectory(o.write_trajectory, facesim::trajectory_from_weights(rig, w, head));
  }
  if (!g.quiet) {
    std::cout << "frames=" << result.raw.frame_count() << " sensors=" << result.raw.sensor_count()
              << " boundary_frames=" << result.boundary_frames;
    if (sc.tap_frame) std::cout << " tap_frame=" << *sc.tap_frame;
    std::cout << " out=" << base.string() << ".{raw.jsonl,weights.csv,profile.json}\n";
  }
  return kOk;
}

struct ReplayOpts {
  fs::path input;
  std::optional<std::string> host;
  std::optional<double> jitter_us, drop, offset_us, drift_ppm, sync_period_us, speed;
};

int run_replay(const Globals& g, const ReplayOpts& o) {
  PipelineConfig cfg = resolve_config(g);
  auto& k = cfg.stream;
  if (o.host) k.host = *o.host;
  if (o.jitter_us) k.jitter_us = *o.jitter_us;
  if (o.drop) k.drop_fraction = *o.drop;
  if (o.offset_us) k.clock_offset_us = *o.offset_us;
  if (o.drift_ppm) k.clock_drift_ppm = *o.drift_ppm;
  if (o.sync_period_us) k.sync_period_us = *o.sync_period_us;
  if (o.speed) k.speed = *o.speed;

  RawSequence raw;
  static_cast<ImuSequence&>(raw) = load_sequence(o.input);
  stream::FaultConfig faults;
  faults.jitter_us = k.jitter_us;
  faults.drop_fraction = k.drop_fraction;
  faults.seed = cfg.seed;
  if (k.clock_offset_us != 0.0 || k.clock_drift_ppm != 0.0) {
    for (std::size_t i = 0; i < raw.sensor_count(); ++i) {
      faults.clocks[i] = {k.clock_offset_us, k.clock_drift_ppm};
    }
  }
  stream::ReplayOptions ro;
  ro.sync_period_us = k.sync_period_us;
  ro.speed = k.speed;
  const auto stats = stream::replay(raw, {k.host, k.port}, faults, ro);
  if (!g.quiet) {
    std::cout << "sent=" << stats.sent << " dropped=" << stats.dropped
              << " sync_pulses=" << stats.sync_pulses << " to=" << k.host << ':' << k.port << '\n';
  }
  return kOk;
}

struct IngestOpts {
  fs::path output, report;
  std::optional<std::string> host;
  std::size_t sensors = kFacialSensorCount + 1;
  std::optional<std::int64_t> duration_ms, idle_ms;
  std::optional<double> sync_period_us;
  bool no_align = false;
};

int run_ingest(const Globals& g, const IngestOpts& o) {
  PipelineConfig cfg = resolve_config(g);
  auto& k = cfg.stream;
  if (o.host) k.host = *o.host;
  if (o.duration_ms) k.duration_ms = *o.duration_ms;
  if (o.idle_ms) k.idle_timeout_ms = *o.idle_ms;
  if (o.sync_period_us) k.sync_period_us = *o.sync_period_us;

  stream::UdpSocket sock(stream::Endpoint{k.host, k.port});
  stream::IngestOptions io;
  io.expected_sensors = o.sensors;
  io.sync_period_us = k.sync_period_us;
  io.align_to_tap = !o.no_align;
  io.duration = std::chrono::milliseconds(k.duration_ms);
  io.idle_timeout = std::chrono::milliseconds(k.idle_timeout_ms);
  if (!g.quiet) std::cerr << "listening on " << k.host << ':' << sock.local_port() << '\n';
  const auto res = stream::ingest(sock, io);

  save_sequence(o.output, res.sequence);
  nlohmann::json rep;
  rep["frames"] = res.sequence.frame_count();
  rep["tap_frame"] = res.tap ? nlohmann::json(res.tap->frame) : nlohmann::json(nullptr);
  rep["tap_peak"] = res.tap ? nlohmann::json(res.tap->peak) : nlohmann::json(nullptr);
  rep["clock"] = nlohmann::json::object();
  for (const auto& [id, c] : res.clock.sensors) {
    rep["clock"][std::to_string(id)] = {{"offset_us", c.offset_us},
                                        {"drift_ppm", c.drift_ppm},
                                        {"pulses", c.pulses},
                                        {"rms_residual_us", c.rms_residual_us}};
  }
  rep["slots"] = {{"measured", res.buffer.count(stream::SlotSource::measured)},
                  {"interpolated", res.buffer.count(stream::SlotSource::interpolated)},
                  {"held", res.buffer.count(stream::SlotSource::held)}};
  rep["stats"] = {{"datagrams", res.stats.datagrams},
                  {"data_packets", res.stats.data_packets},
                  {"sync_packets", res.stats.sync_packets},
                  {"decode_errors", res.stats.decode_errors},
                  {"decode_errors_by_kind", res.stats.decode_errors_by_kind}};
  rep["warnings"] = res.warnings;
  if (!o.report.empty()) write_text(o.report, rep.dump(2));
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  if (!g.quiet) {
    std::cout << "frames=" << res.sequence.frame_count() << " tap_frame="
              << (res.tap ? std::to_string(res.tap->frame) : std::string("none"))
              << " decode_errors=" << res.stats.decode_errors << '\n';
  }
  return kOk;
}

struct CalibOpts {
  fs::path input, profile, output;
  std::optional<std::string> acc_head_comp;
  std::optional<std::size_t> threads;
};

int run_calibrate(const Globals& g, const CalibOpts& o) {
  PipelineConfig cfg = resolve_config(g);
  if (o.acc_head_comp) cfg.calibration.acc_head_comp = parse_acc_head_comp(*o.acc_head_comp);
  if (o.threads) cfg.calibration.threads = *o.threads;
  RawSequence raw;
  static_cast<ImuSequence&>(raw) = load_sequence(o.input);
  const auto profile = calib::load_profile(o.profile);
  const auto out = calib::calibrate_sequence(profile, raw,
                                             {cfg.calibration.acc_head_comp, static_cast<unsigned>(cfg.calibration.threads)});
  ensure_parent(o.output);
  save_sequence(o.output, out);
  if (!g.quiet) std::cout << "frames=" << out.frame_count() << " out=" << o.output.string() << '\n';
  return kOk;
}

struct TrainOpts {
  fs::path data, out, loss;
  std::optional<std::size_t> epochs, eval_sequences;
};

std::vector<std::pair<std::string, diffusion::SequencePair>> load_dataset(const fs::path& dir,
                                                                          std::size_t sensors) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " not found");
  std::vector<fs::path> calibrated;
  const std::string suffix = ".calibrated.jsonl";
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) calibrated.push_back(e.path());
  }
  std::sort(calibrated.begin(), calibrated.end());
  if (calibrated.empty()) throw IoError("no *" + suffix + " files in " + dir.string());
  const auto ids = diffusion::facial_sensor_ids(sensors);
  std::vector<std::pair<std::string, diffusion::SequencePair>> out;
  for (const auto& p : calibrated) {
    const std::string name = p.filename().string();
    const std::string stem = name.substr(0, name.size() - suffix.size());
    const fs::path wpath = dir / (stem + ".weights.csv");
    const auto seq = load_sequence(p);
    const auto w = facesim::load_weights_csv(wpath);
    if (w.frames() != seq.frame_count()) {
      throw FormatError(stem + ": " + std::to_string(seq.frame_count()) + " IMU frames but " +
                        std::to_string(w.frames()) + " weight frames");
    }
    out.push_back({stem, {diffusion::condition_matrix(seq, ids), diffusion::weights_matrix(w)}});
  }
  return out;
}

int run_train(const Globals& g, const TrainOpts& o) {
  PipelineConfig cfg = resolve_config(g);
  auto tc = cfg.training;
  if (g.seed || std::getenv("FACECAP_SEED")) tc.seed = cfg.seed;
  if (o.epochs) tc.epochs = *o.epochs;
  const std::size_t n_eval = o.eval_sequences.value_or(cfg.eval_sequences);
  const auto data = load_dataset(o.data, tc.model.sensors);
  if (data.size() <= n_eval) {
    throw UsageError("dataset has " + std::to_string(data.size()) + " sequences; need more than " +
                     std::to_string(n_eval) + " held out");
  }
  std::vector<diffusion::SequencePair> train_set, eval_set;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (i < data.size() - n_eval ? train_set : eval_set).push_back(data[i].second);
  }
  if (!train_set.empty() && train_set.front().weights.cols() != tc.model.channels) {
    tc.model.channels = train_set.front().weights.cols();
  }
  const auto res = diffusion::train(train_set, eval_set, tc, [&](const diffusion::LossRecord& r) {
    if (!g.quiet) {
      std::cout << "epoch " << r.epoch << " train_loss=" << r.train_loss << " eval_loss=" << r.eval_loss
                << std::endl;
    }
  });
  ensure_parent(o.out);
  diffusion::save_model(o.out, res.model);
  if (!o.loss.empty()) {
    ensure_parent(o.loss);
    diffusion::save_loss_trace_csv(o.loss, res.trace);
  }
  return kOk;
}

struct InferOpts {
  fs::path model, input, output;
  std::optional<std::size_t> overlap;
};

int run_infer(const Globals& g, const InferOpts& o) {
  PipelineConfig cfg = resolve_config(g);
  std::uint64_t seed = cfg.inference.seed;
  if (g.seed || std::getenv("FACECAP_SEED")) seed = cfg.seed;
  auto model = diffusion::load_model(o.model);
  const std::size_t overlap = o.overlap.value_or(std::min(cfg.inference.overlap, model.config.window / 2));
  const auto seq = load_sequence(o.input);
  const auto c = diffusion::condition_matrix(seq, diffusion::facial_sensor_ids(model.config.sensors));
  const auto w = diffusion::windowed_inference(model, c, overlap, seed);
  ensure_parent(o.output);
  facesim::save_weights_csv(o.output, diffusion::to_weight_sequence(w));
  if (!g.quiet) std::cout << "frames=" << w.rows() << " channels=" << w.cols() << '\n';
  return kOk;
}

struct EvalOpts {
  fs::path pred, gt, rig, csv, json;
};

int run_eval(const Globals& g, const EvalOpts& o) {
  PipelineConfig cfg = resolve_config(g);
  const auto rig = load_rig_or_default(o.rig.empty() ? cfg.rig_path : o.rig);
  const auto pred = facesim::load_weights_csv(o.pred);
  const auto gt = facesim::load_weights_csv(o.gt);
  const auto report = metrics::evaluate(rig, pred, gt);
  if (!o.csv.empty()) {
    ensure_parent(o.csv);
    metrics::save_report_csv(o.csv, report);
  }
  const std::string summary = metrics::report_to_json(report);
  if (!o.json.empty()) write_text(o.json, summary);
  if (!g.quiet) std::cout << summary << '\n';
  return kOk;
}

struct PlacementOpts {
  fs::path input, rig, json;
};

int run_placement(const Globals& g, const PlacementOpts& o) {
  PipelineConfig cfg = resolve_config(g);
  const auto rig = load_rig_or_default(o.rig.empty() ? cfg.rig_path : o.rig);
  const auto seq = load_sequence(o.input);
  const auto rows = metrics::placement_table(seq, seq.sensor_count() <= rig.sensor_count() ? &rig : nullptr);
  if (!o.json.empty()) write_text(o.json, metrics::placement_table_to_json(rows));
  std::cout << metrics::format_placement_table(rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facecap: face-mounted IMU capture, calibration and blendshape decoding"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config (.toml or .json)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random choice (env FACECAP_SEED)");
  app.add_flag("--paper-literal", g.paper_literal,
               "Use the printed acceleration denominator and orientation matrix");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  MagOpts mag;
  auto* c_mag = app.add_subcommand("mag-calibrate", "Magnetometer CSV (x,y,z) -> offset/scale JSON");
  c_mag->add_option("-i,--input", mag.input, "Magnetometer CSV")->required();
  c_mag->add_option("-o,--output", mag.output, "Output JSON (default stdout)");

  SimOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Synthesize a raw capture, ground-truth weights and profile");
  c_sim->add_option("-d,--out-dir", sim.out_dir, "Output directory");
  c_sim->add_option("-p,--prefix", sim.prefix, "Output file prefix");
  c_sim->add_option("--frames", sim.frames, "Expression frames after the lead-in");
  c_sim->add_option("--style", sim.style, "expression|speech");
  c_sim->add_option("--channels", sim.channels, "Comma-separated blendshapes to animate (default all)");
  c_sim->add_option("--head-amplitude", sim.head_amplitude, "Head rotation amplitude, rad");
  c_sim->add_option("--accel-noise", sim.accel_noise, "Acceleration noise sigma, m/s^2");
  c_sim->add_option("--orientation-noise", sim.orientation_noise, "Orientation noise sigma, rad");
  c_sim->add_option("--lead-in", sim.lead_in, "Neutral frames before the expression");
  c_sim->add_option("--tap-frame", sim.tap_frame, "Frame of the mentalis tap");
  c_sim->add_flag("--no-tap", sim.no_tap, "Do not inject a tap");
  c_sim->add_option("--rig", sim.rig, "Rig JSON (default: built-in synthetic rig)");
  c_sim->add_option("--write-rig", sim.write_rig, "Also save the rig used");
  c_sim->add_option("--write-trajectory", sim.write_trajectory, "Also save the mesh trajectory");

  ReplayOpts rep;
  auto* c_rep = app.add_subcommand("replay", "Send a raw capture as sensor datagrams over UDP");
  c_rep->add_option("-i,--input", rep.input, "Raw sequence (.jsonl)")->required();
  c_rep->add_option("--host", rep.host, "Destination IPv4 address");
  std::optional<std::uint16_t> rep_port;
  c_rep->add_option("--port", rep_port, "Destination port (env FACECAP_PORT)");
  c_rep->add_option("--jitter-us", rep.jitter_us, "Uniform timestamp jitter, us");
  c_rep->add_option("--drop", rep.drop, "Data packet drop fraction [0,1]");
  c_rep->add_option("--offset-us", rep.offset_us, "Device clock offset, us");
  c_rep->add_option("--drift-ppm", rep.drift_ppm, "Device clock drift, ppm");
  c_rep->add_option("--sync-period-us", rep.sync_period_us, "Sync pulse period, us");
  c_rep->add_option("--speed", rep.speed, "Playback speed (0: as fast as possible)");

  IngestOpts ing;
  auto* c_ing = app.add_subcommand("ingest", "Receive sensor datagrams and assemble a raw capture");
  c_ing->add_option("-o,--output", ing.output, "Raw sequence output (.jsonl)")->required();
  c_ing->add_option("--report", ing.report, "Clock/tap/provenance report (.json)");
  c_ing->add_option("--host", ing.host, "Local IPv4 address to bind");
  std::optional<std::uint16_t> ing_port;
  c_ing->add_option("--port", ing_port, "Local port (env FACECAP_PORT)");
  c_ing->add_option("--sensors", ing.sensors, "Expected sensors including the auxiliary one");
  c_ing->add_option("--duration-ms", ing.duration_ms, "Maximum capture time");
  c_ing->add_option("--idle-ms", ing.idle_ms, "Stop after this long without datagrams");
  c_ing->add_option("--sync-period-us", ing.sync_period_us, "Sync pulse period, us");
  c_ing->add_flag("--no-align", ing.no_align, "Keep frames before the tap");

  CalibOpts cal;
  auto* c_cal = app.add_subcommand("calibrate", "Raw capture + profile -> calibrated sequence");
  c_cal->add_option("-i,--input", cal.input, "Raw sequence (.jsonl)")->required();
  c_cal->add_option("--profile", cal.profile, "Calibration profile (.json)")->required();
  c_cal->add_option("-o,--output", cal.output, "Calibrated sequence output (.jsonl)")->required();
  c_cal->add_option("--acc-head-comp", cal.acc_head_comp, "literal|inverse");
  c_cal->add_option("--threads", cal.threads, "Worker threads (0: all cores)");

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "Train the diffusion decoder on a dataset directory");
  c_tr->add_option("--data", tr.data, "Directory of NAME.calibrated.jsonl + NAME.weights.csv")->required();
  c_tr->add_option("-o,--out", tr.out, "Checkpoint output")->required();
  c_tr->add_option("--loss", tr.loss, "Loss trace CSV");
  c_tr->add_option("--epochs", tr.epochs, "Training epochs");
  c_tr->add_option("--eval-sequences", tr.eval_sequences, "Sequences held out (last in name order)");

  InferOpts inf;
  auto* c_inf = app.add_subcommand("infer", "Decode blendshape weights from a calibrated sequence");
  c_inf->add_option("-m,--model", inf.model, "Checkpoint")->required();
  c_inf->add_option("-i,--input", inf.input, "Calibrated sequence (.jsonl)")->required();
  c_inf->add_option("-o,--output", inf.output, "Weights CSV output")->required();
  c_inf->add_option("--overlap", inf.overlap, "Window overlap in frames");

  EvalOpts ev;
  auto* c_ev = app.add_subcommand("eval", "Compare predicted and ground-truth weights");
  c_ev->add_option("--pred", ev.pred, "Predicted weights CSV")->required();
  c_ev->add_option("--gt", ev.gt, "Ground-truth weights CSV")->required();
  c_ev->add_option("--rig", ev.rig, "Rig JSON (default: built-in synthetic rig)");
  c_ev->add_option("--csv", ev.csv, "Per-frame report CSV");
  c_ev->add_option("--json", ev.json, "Summary JSON");

  PlacementOpts pl;
  auto* c_pl = app.add_subcommand("placement-report", "Per-sensor acceleration-magnitude variance table");
  c_pl->add_option("-i,--input", pl.input, "Calibrated sequence (.jsonl)")->required();
  c_pl->add_option("--rig", pl.rig, "Rig JSON for zone labels");
  c_pl->add_option("--json", pl.json, "Table as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(kUsage, "usage", e.what());
  }

  try {
    if (rep_port || ing_port) {
      // Explicit --port outranks FACECAP_PORT; pass it through the env slot.
      const std::string p = std::to_string(rep_port ? *rep_port : *ing_port);
      ::setenv("FACECAP_PORT", p.c_str(), 1);
    }
    if (c_mag->parsed()) return run_mag_calibrate(mag);
    if (c_sim->parsed()) return run_simulate(g, sim);
    if (c_rep->parsed()) return run_replay(g, rep);
    if (c_ing->parsed()) return run_ingest(g, ing);
    if (c_cal->parsed()) return run_calibrate(g, cal);
    if (c_tr->parsed()) return run_train(g, tr);
    if (c_inf->parsed()) return run_infer(g, inf);
    if (c_ev->parsed()) return run_eval(g, ev);
    if (c_pl->parsed()) return run_placement(g, pl);
    return report_error(kUsage, "usage", "no subcommand");
  } catch (const UsageError& e) {
    return report_error(kUsage, "usage", e.what());
  } catch (const std::invalid_argument& e) {
    // Bad enum names and similar argument-level problems.
    if (dynamic_cast<const metrics::MetricsError*>(&e) || dynamic_cast<const ad::ShapeError*>(&e)) {
      return report_error(kComputation, "computation", e.what());
    }
    return report_error(kUsage, "usage", e.what());
  } catch (const IoError& e) {
    return report_error(kIo, "io", e.what());
  } catch (const FormatError& e) {
    return report_error(kFormat, "format", e.what());
  } catch (const nlohmann::json::exception& e) {
    return report_error(kFormat, "format", e.what());
  } catch (const stream::DecodeError& e) {
    return report_error(kFormat, "format", e.what());
  } catch (const stream::SocketError& e) {
    return report_error(kSocket, e.address_in_use() ? "port_in_use" : "socket", e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(kIo, "io", e.what());
  } catch (const std::runtime_error& e) {
    return report_error(kComputation, "computation", e.what());
  } catch (const std::exception& e) {
    return report_error(kGeneric, "error", e.what());
  }
}
