#include "facecap/imu.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace facecap {

void ImuSequence::validate() const {
  const std::size_t sensors = sensor_count();
  for (std::size_t j = 0; j < frames.size(); ++j) {
    const auto& f = frames[j];
    if (f.sensors.size() != sensors) {
      throw SequenceError("frame " + std::to_string(j) + " has " +
                          std::to_string(f.sensors.size()) + " sensors, expected " +
                          std::to_string(sensors));
    }
    for (std::size_t i = 0; i < sensors; ++i) {
      const auto& s = f.sensors[i];
      if (!s.acceleration.is_finite() || !s.orientation.is_finite()) {
        throw SequenceError("non-finite sample at frame " + std::to_string(j) + ", sensor " +
                            std::to_string(i));
      }
      if (std::abs(s.orientation.norm() - 1.0) > 1e-6) {
        throw SequenceError("non-unit quaternion at frame " + std::to_string(j) + ", sensor " +
                            std::to_string(i));
      }
    }
  }
}

std::vector<Vec3> ImuSequence::accelerations(std::size_t sensor) const {
  std::vector<Vec3> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.sensors.at(sensor).acceleration);
  return out;
}

std::vector<Quaternion> ImuSequence::orientations(std::size_t sensor) const {
  std::vector<Quaternion> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.sensors.at(sensor).orientation);
  return out;
}

void write_sequence_jsonl(std::ostream& out, const ImuSequence& seq) {
  for (const auto& f : seq.frames) {
    nlohmann::json sensors = nlohmann::json::array();
    for (const auto& s : f.sensors) {
      const auto& q = s.orientation;
      const auto& a = s.acceleration;
      sensors.push_back({{"q", {q.w, q.x, q.y, q.z}}, {"a", {a.x, a.y, a.z}}});
    }
    nlohmann::json line = {{"host_time_us", f.host_time_us}, {"sensors", std::move(sensors)}};
    out << line.dump() << '\n';
  }
}

ImuSequence read_sequence_jsonl(std::istream& in) {
  ImuSequence seq;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ImuFrame frame;
      frame.host_time_us = j.at("host_time_us").get<double>();
      for (const auto& s : j.at("sensors")) {
        const auto& q = s.at("q");
        const auto& a = s.at("a");
        if (q.size() != 4 || a.size() != 3) throw SequenceError("bad q/a arity");
        ImuSample sample;
        sample.orientation = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                              q[3].get<double>()};
        sample.acceleration = {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
        frame.sensors.push_back(sample);
      }
      seq.frames.push_back(std::move(frame));
    } catch (const nlohmann::json::exception& e) {
      throw SequenceError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const SequenceError& e) {
      throw SequenceError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  seq.validate();
  return seq;
}

void save_sequence(const std::filesystem::path& path, const ImuSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_sequence_jsonl(out, seq);
}

ImuSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_sequence_jsonl(in);
}

}  // namespace facecap
