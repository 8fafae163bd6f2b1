#include "facecap/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace facecap {
namespace {

using nlohmann::json;

json toml_node_to_json(const toml::node& node, const std::string& where) {
  if (const auto* t = node.as_table()) {
    json obj = json::object();
    for (auto&& [k, v] : *t) obj[std::string(k.str())] = toml_node_to_json(v, where + "." + std::string(k.str()));
    return obj;
  }
  if (const auto* a = node.as_array()) {
    json arr = json::array();
    for (const auto& v : *a) arr.push_back(toml_node_to_json(v, where + "[]"));
    return arr;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw FormatError("config: unsupported TOML value type at " + where);
}

class Section {
 public:
  Section(const json& doc, const std::string& name) : name_(name) {
    if (name.empty()) {
      obj_ = &doc;
    } else if (doc.contains(name)) {
      obj_ = &doc.at(name);
      if (!obj_->is_object()) throw FormatError("config: [" + name + "] must be a table");
    }
  }

  bool has(const char* key) {
    if (!obj_ || !obj_->contains(key)) return false;
    seen_.insert(key);
    return true;
  }
  const json& at(const char* key) const { return obj_->at(key); }

  void read(const char* key, double& out) {
    if (!has(key)) return;
    if (!at(key).is_number()) fail(key, "a number");
    out = at(key).get<double>();
  }
  void read(const char* key, bool& out) {
    if (!has(key)) return;
    if (!at(key).is_boolean()) fail(key, "a boolean");
    out = at(key).get<bool>();
  }
  void read(const char* key, std::string& out) {
    if (!has(key)) return;
    if (!at(key).is_string()) fail(key, "a string");
    out = at(key).get<std::string>();
  }
  template <typename I>
  void read_int(const char* key, I& out) {
    if (!has(key)) return;
    const json& v = at(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    if constexpr (std::is_unsigned_v<I>) {
      if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) fail(key, "a non-negative integer");
      const auto u = v.get<std::uint64_t>();
      if (u > std::numeric_limits<I>::max()) fail(key, "in range");
      out = static_cast<I>(u);
    } else {
      out = static_cast<I>(v.get<std::int64_t>());
    }
  }
  template <typename E>
  void read_enum(const char* key, E& out, E (*parse)(const std::string&)) {
    std::string s;
    read(key, s);
    if (s.empty()) return;
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      throw FormatError("config: " + where(key) + ": " + e.what());
    }
  }

  /// Rejects keys that were never read. Sub-tables listed in `children` are
  /// handled elsewhere.
  void finish(std::initializer_list<const char*> children = {}) {
    if (!obj_) return;
    for (const char* c : children) seen_.insert(c);
    for (const auto& [k, v] : obj_->items()) {
      if (!seen_.count(k)) throw FormatError("config: unknown key " + where(k.c_str()));
    }
  }

 private:
  std::string where(const char* key) const {
    return name_.empty() ? std::string(key) : name_ + "." + key;
  }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw FormatError("config: " + where(key) + " must be " + what);
  }

  const json* obj_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

std::string toml_value(const json& v) {
  if (v.is_string()) return v.dump();  // JSON escapes are valid TOML basic-string escapes
  if (v.is_number_float()) {
    std::string s = v.dump();
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
  }
  return v.dump();
}

}  // namespace

calib::AccHeadComp parse_acc_head_comp(const std::string& s) {
  if (s == "literal") return calib::AccHeadComp::literal;
  if (s == "inverse") return calib::AccHeadComp::inverse;
  throw std::invalid_argument("unknown acc_head_comp '" + s + "' (literal|inverse)");
}
std::string to_string(calib::AccHeadComp m) {
  return m == calib::AccHeadComp::literal ? "literal" : "inverse";
}

facesim::DenominatorMode parse_denominator(const std::string& s) {
  if (s == "squared") return facesim::DenominatorMode::squared;
  if (s == "paper_literal") return facesim::DenominatorMode::paper_literal;
  throw std::invalid_argument("unknown denominator mode '" + s + "' (squared|paper_literal)");
}
std::string to_string(facesim::DenominatorMode m) {
  return m == facesim::DenominatorMode::squared ? "squared" : "paper_literal";
}

facesim::OrientationMode parse_orientation(const std::string& s) {
  if (s == "orthonormal") return facesim::OrientationMode::orthonormal;
  if (s == "paper_literal") return facesim::OrientationMode::paper_literal;
  throw std::invalid_argument("unknown orientation mode '" + s + "' (orthonormal|paper_literal)");
}
std::string to_string(facesim::OrientationMode m) {
  return m == facesim::OrientationMode::orthonormal ? "orthonormal" : "paper_literal";
}

json parse_toml(const std::string& text) {
  try {
    const toml::table tbl = toml::parse(text);
    return toml_node_to_json(tbl, "");
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw FormatError(os.str());
  }
}

diffusion::TrainConfig train_config_from_document(const json& doc) {
  if (!doc.is_object()) throw FormatError("config: document must be a table/object");
  diffusion::TrainConfig c;
  Section m(doc, "model");
  m.read_int("layers", c.model.layers);
  m.read_int("d_model", c.model.d_model);
  m.read_int("heads", c.model.heads);
  m.read_int("ff_width", c.model.ff_width);
  m.read_int("window", c.model.window);
  m.read_int("channels", c.model.channels);
  m.read_int("sensors", c.model.sensors);
  m.read("positional", c.model.positional);
  m.finish();
  Section s(doc, "schedule");
  s.read_int("steps", c.schedule.steps);
  s.read("beta_start", c.schedule.beta_start);
  s.read("beta_end", c.schedule.beta_end);
  s.finish();
  Section t(doc, "training");
  t.read_int("epochs", c.epochs);
  t.read_int("batch_size", c.batch_size);
  t.read_int("stride", c.stride);
  t.read("lr", c.adam.lr);
  t.read("beta1", c.adam.beta1);
  t.read("beta2", c.adam.beta2);
  t.read("eps", c.adam.eps);
  t.read_int("seed", c.seed);
  t.has("eval_sequences");  // pipeline-level key, read by config_from_json
  t.finish();
  try {
    c.model.validate();
    (void)diffusion::build_schedule(c.schedule);
  } catch (const diffusion::DiffusionError& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (c.batch_size == 0 || c.stride == 0) {
    throw FormatError("config: training.batch_size and training.stride must be positive");
  }
  if (!(c.adam.lr > 0.0)) throw FormatError("config: training.lr must be positive");
  return c;
}

json train_config_to_document(const diffusion::TrainConfig& c) {
  return {{"model",
           {{"layers", c.model.layers},
            {"d_model", c.model.d_model},
            {"heads", c.model.heads},
            {"ff_width", c.model.ff_width},
            {"window", c.model.window},
            {"channels", c.model.channels},
            {"sensors", c.model.sensors},
            {"positional", c.model.positional}}},
          {"schedule",
           {{"steps", c.schedule.steps},
            {"beta_start", c.schedule.beta_start},
            {"beta_end", c.schedule.beta_end}}},
          {"training",
           {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"stride", c.stride},
            {"lr", c.adam.lr},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps},
            {"seed", c.seed}}}};
}

PipelineConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw FormatError("config: document must be a table/object");
  PipelineConfig c;
  Section top(doc, "");
  top.read_int("seed", c.seed);
  top.finish({"rig", "simulation", "calibration", "stream", "model", "schedule", "training", "inference"});

  Section rig(doc, "rig");
  std::string rig_path;
  rig.read("path", rig_path);
  c.rig_path = rig_path;
  rig.finish();

  Section sim(doc, "simulation");
  auto& s = c.simulation;
  sim.read_int("frames", s.frames);
  sim.read_enum("style", s.style, &facesim::parse_weight_style);
  sim.read("amplitude", s.amplitude);
  sim.read_int("smoothing_n", s.smoothing_n);
  sim.read_enum("denominator", s.denominator, &parse_denominator);
  sim.read_enum("orientation", s.orientation, &parse_orientation);
  sim.read("head_amplitude", s.head_amplitude);
  sim.read("accel_noise", s.accel_noise);
  sim.read("orientation_noise", s.orientation_noise);
  sim.read_int("lead_in_frames", s.lead_in_frames);
  sim.read_int("tap_frame", s.tap_frame);
  sim.read("tap_magnitude", s.tap_magnitude);
  sim.finish();
  if (s.smoothing_n < 1) throw FormatError("config: simulation.smoothing_n must be >= 1");

  Section cal(doc, "calibration");
  cal.read_enum("acc_head_comp", c.calibration.acc_head_comp, &parse_acc_head_comp);
  cal.read_int("threads", c.calibration.threads);
  cal.finish();

  Section st(doc, "stream");
  auto& k = c.stream;
  st.read("host", k.host);
  st.read_int("port", k.port);
  st.read("sync_period_us", k.sync_period_us);
  st.read("jitter_us", k.jitter_us);
  st.read("drop_fraction", k.drop_fraction);
  st.read("speed", k.speed);
  st.read_int("duration_ms", k.duration_ms);
  st.read_int("idle_timeout_ms", k.idle_timeout_ms);
  st.read("clock_offset_us", k.clock_offset_us);
  st.read("clock_drift_ppm", k.clock_drift_ppm);
  st.finish();
  if (k.drop_fraction < 0.0 || k.drop_fraction > 1.0) {
    throw FormatError("config: stream.drop_fraction must lie in [0, 1]");
  }
  if (!(k.sync_period_us > 0.0)) throw FormatError("config: stream.sync_period_us must be positive");

  c.training = train_config_from_document(doc);
  Section tr(doc, "training");
  tr.read_int("eval_sequences", c.eval_sequences);

  Section inf(doc, "inference");
  inf.read_int("overlap", c.inference.overlap);
  inf.read_int("seed", c.inference.seed);
  inf.finish();
  if (c.inference.overlap >= c.training.model.window) {
    throw FormatError("config: inference.overlap must be shorter than model.window");
  }
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json doc = train_config_to_document(c.training);
  doc["training"]["eval_sequences"] = c.eval_sequences;
  doc["seed"] = c.seed;
  doc["rig"] = {{"path", c.rig_path.string()}};
  const auto& s = c.simulation;
  doc["simulation"] = {{"frames", s.frames},
                       {"style", facesim::to_string(s.style)},
                       {"amplitude", s.amplitude},
                       {"smoothing_n", s.smoothing_n},
                       {"denominator", to_string(s.denominator)},
                       {"orientation", to_string(s.orientation)},
                       {"head_amplitude", s.head_amplitude},
                       {"accel_noise", s.accel_noise},
                       {"orientation_noise", s.orientation_noise},
                       {"lead_in_frames", s.lead_in_frames},
                       {"tap_frame", s.tap_frame},
                       {"tap_magnitude", s.tap_magnitude}};
  doc["calibration"] = {{"acc_head_comp", to_string(c.calibration.acc_head_comp)},
                        {"threads", c.calibration.threads}};
  const auto& k = c.stream;
  doc["stream"] = {{"host", k.host},
                   {"port", k.port},
                   {"sync_period_us", k.sync_period_us},
                   {"jitter_us", k.jitter_us},
                   {"drop_fraction", k.drop_fraction},
                   {"speed", k.speed},
                   {"duration_ms", k.duration_ms},
                   {"idle_timeout_ms", k.idle_timeout_ms},
                   {"clock_offset_us", k.clock_offset_us},
                   {"clock_drift_ppm", k.clock_drift_ppm}};
  doc["inference"] = {{"overlap", c.inference.overlap}, {"seed", c.inference.seed}};
  return doc;
}

std::string config_to_toml(const PipelineConfig& c) {
  const json doc = config_to_json(c);
  std::ostringstream os;
  for (const auto& [k, v] : doc.items()) {
    if (!v.is_object()) os << k << " = " << toml_value(v) << '\n';
  }
  for (const auto& [k, v] : doc.items()) {
    if (!v.is_object()) continue;
    os << "\n[" << k << "]\n";
    for (const auto& [kk, vv] : v.items()) os << kk << " = " << toml_value(vv) << '\n';
  }
  return os.str();
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  if (path.extension() == ".toml") {
    doc = parse_toml(ss.str());
  } else {
    try {
      doc = json::parse(ss.str());
    } catch (const json::exception& e) {
      throw FormatError(std::string("config: ") + e.what());
    }
  }
  PipelineConfig c = config_from_json(doc);
  if (!c.rig_path.empty()) {
    if (c.rig_path.is_relative()) c.rig_path = path.parent_path() / c.rig_path;
    if (!std::filesystem::exists(c.rig_path)) {
      throw IoError("config: rig file " + c.rig_path.string() + " does not exist");
    }
  }
  return c;
}

}  // namespace facecap

namespace facecap::diffusion {

bool TrainConfig::operator==(const TrainConfig& o) const {
  return model == o.model && schedule == o.schedule && epochs == o.epochs &&
         batch_size == o.batch_size && stride == o.stride && adam.lr == o.adam.lr &&
         adam.beta1 == o.adam.beta1 && adam.beta2 == o.adam.beta2 && adam.eps == o.adam.eps &&
         seed == o.seed;
}

std::string train_config_to_json(const TrainConfig& c) { return train_config_to_document(c).dump(2); }

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return train_config_from_document(doc);
}

TrainConfig train_config_from_toml(const std::string& text) {
  return train_config_from_document(parse_toml(text));
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return path.extension() == ".toml" ? train_config_from_toml(ss.str())
                                     : train_config_from_json(ss.str());
}

}  // namespace facecap::diffusion
