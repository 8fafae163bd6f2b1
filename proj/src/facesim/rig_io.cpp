#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <sodium.h>

#include "facecap/facesim.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace facecap::facesim {
namespace {

std::string encode_vertices(const std::vector<Vec3>& verts) {
  std::vector<float> buf;
  buf.reserve(verts.size() * 3);
  for (const auto& v : verts) {
    buf.push_back(static_cast<float>(v.x));
    buf.push_back(static_cast<float>(v.y));
    buf.push_back(static_cast<float>(v.z));
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
  const std::size_t nbytes = buf.size() * sizeof(float);
  std::string out(sodium_base64_encoded_len(nbytes, sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes, nbytes, sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<Vec3> decode_vertices(const std::string& b64, std::size_t vertex_count,
                                  const std::string& what) {
  const std::size_t expected = vertex_count * 3 * sizeof(float);
  std::vector<unsigned char> bytes(b64.size());
  std::size_t len = 0;
  if (sodium_base642bin(bytes.data(), bytes.size(), b64.data(), b64.size(), nullptr, &len,
                        nullptr, sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw FormatError("rig: " + what + " is not valid base64");
  }
  if (len != expected) {
    throw FormatError("rig: " + what + " holds " + std::to_string(len) + " bytes, expected " +
                      std::to_string(expected));
  }
  std::vector<float> floats(vertex_count * 3);
  std::memcpy(floats.data(), bytes.data(), expected);
  std::vector<Vec3> out(vertex_count);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    out[v] = {floats[3 * v], floats[3 * v + 1], floats[3 * v + 2]};
  }
  return out;
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("trajectory file truncated");
  return value;
}

constexpr char kTrajectoryMagic[4] = {'I', 'M', 'F', 'T'};

}  // namespace

std::string rig_to_json(const BlendshapeRig& rig) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  nlohmann::json j;
  j["format"] = "facecap-rig";
  j["version"] = 1;
  j["vertex_count"] = rig.vertex_count();
  j["neutral_vertices"] = encode_vertices(rig.neutral);
  j["blendshapes"] = nlohmann::json::array();
  for (std::size_t k = 0; k < rig.deltas.size(); ++k) {
    const std::string name =
        k < rig.blendshape_names.size() ? rig.blendshape_names[k] : "shape" + std::to_string(k);
    j["blendshapes"].push_back({{"name", name}, {"delta", encode_vertices(rig.deltas[k])}});
  }
  j["landmark_indices"] = rig.landmark_indices;
  j["anchors"] = nlohmann::json::array();
  for (const auto& a : rig.anchors) {
    j["anchors"].push_back({{"sensor_id", a.sensor_id},
                            {"vertex", a.vertex},
                            {"support", {a.support[0], a.support[1]}},
                            {"zone", a.zone}});
  }
  return j.dump(2);
}

BlendshapeRig rig_from_json(const std::string& text) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  BlendshapeRig rig;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "facecap-rig") throw FormatError("rig: unexpected format tag");
    if (j.at("version").get<int>() != 1) throw FormatError("rig: unsupported version");
    const auto n = j.at("vertex_count").get<std::size_t>();
    rig.neutral = decode_vertices(j.at("neutral_vertices").get<std::string>(), n, "neutral_vertices");
    for (const auto& b : j.at("blendshapes")) {
      const auto name = b.at("name").get<std::string>();
      rig.blendshape_names.push_back(name);
      rig.deltas.push_back(decode_vertices(b.at("delta").get<std::string>(), n, name));
    }
    rig.landmark_indices = j.at("landmark_indices").get<std::vector<std::size_t>>();
    for (const auto& a : j.at("anchors")) {
      Anchor anchor;
      anchor.sensor_id = a.at("sensor_id").get<std::size_t>();
      anchor.vertex = a.at("vertex").get<std::size_t>();
      const auto sup = a.at("support").get<std::vector<std::size_t>>();
      if (sup.size() != 2) throw FormatError("rig: anchor support must hold two vertices");
      anchor.support = {sup[0], sup[1]};
      anchor.zone = a.value("zone", "");
      rig.anchors.push_back(anchor);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("rig: ") + e.what());
  }
  std::sort(rig.anchors.begin(), rig.anchors.end(),
            [](const Anchor& a, const Anchor& b) { return a.sensor_id < b.sensor_id; });
  try {
    rig.validate();
  } catch (const SimulationError& e) {
    throw FormatError(std::string("rig: ") + e.what());
  }
  return rig;
}

void save_rig(const std::filesystem::path& path, const BlendshapeRig& rig) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << rig_to_json(rig) << '\n';
}

BlendshapeRig load_rig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return rig_from_json(ss.str());
}

void save_trajectory(const std::filesystem::path& path, const MeshTrajectory& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::uint32_t verts =
      traj.frames.empty() ? 0 : static_cast<std::uint32_t>(traj.frames.front().size());
  out.write(kTrajectoryMagic, 4);
  write_pod<std::uint32_t>(out, 1);
  write_pod<std::uint32_t>(out, verts);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(traj.frames.size()));
  write_pod<double>(out, traj.tau);
  write_pod<std::uint64_t>(out, 0);
  for (const auto& frame : traj.frames) {
    if (frame.size() != verts) throw SimulationError("trajectory frames differ in vertex count");
    for (const auto& v : frame) {
      write_pod<float>(out, static_cast<float>(v.x));
      write_pod<float>(out, static_cast<float>(v.y));
      write_pod<float>(out, static_cast<float>(v.z));
    }
  }
}

MeshTrajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTrajectoryMagic, 4) != 0) {
    throw FormatError("trajectory file has a bad magic");
  }
  if (read_pod<std::uint32_t>(in) != 1) throw FormatError("unsupported trajectory version");
  const auto verts = read_pod<std::uint32_t>(in);
  const auto frames = read_pod<std::uint32_t>(in);
  MeshTrajectory traj;
  traj.tau = read_pod<double>(in);
  read_pod<std::uint64_t>(in);
  traj.frames.resize(frames);
  for (auto& frame : traj.frames) {
    frame.resize(verts);
    for (auto& v : frame) {
      v.x = read_pod<float>(in);
      v.y = read_pod<float>(in);
      v.z = read_pod<float>(in);
    }
  }
  return traj;
}

void save_weights_csv(const std::filesystem::path& path, const WeightSequence& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t k = 0; k < w.channels(); ++k) out << (k ? "," : "") << 'w' << k;
  out << '\n';
  char buf[32];
  for (std::size_t j = 0; j < w.frames(); ++j) {
    for (std::size_t k = 0; k < w.channels(); ++k) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), w.at(j, k));
      if (k) out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

WeightSequence load_weights_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty weight file");
  const std::size_t channels = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<double> values;
  std::size_t frames = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t fields = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc{}) {
        throw FormatError(path.string() + ": bad number on row " + std::to_string(frames + 1));
      }
      values.push_back(v);
      ++fields;
      p = res.ptr;
      if (p < end && *p == ',') ++p;
    }
    if (fields != channels) {
      throw FormatError(path.string() + ": row " + std::to_string(frames + 1) + " has " +
                        std::to_string(fields) + " fields, expected " + std::to_string(channels));
    }
    ++frames;
  }
  WeightSequence w(frames, channels);
  w.values() = std::move(values);
  return w;
}

}  // namespace facecap::facesim
