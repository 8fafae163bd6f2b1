#include "facecap/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace facecap::ad {
namespace {

constexpr char kMagic[4] = {'I', 'M', 'F', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& d) : d_(d) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, d_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == d_.size(); }

 private:
  void need(std::size_t n) const {
    if (d_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  const std::string& d_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
void Checkpoint::put(const Parameter<T>& p) {
  CheckpointEntry e;
  e.name = p.name;
  e.dtype = std::is_same_v<T, float> ? DType::f32 : DType::f64;
  e.dims.assign(p.value.shape.begin(), p.value.shape.end());
  e.values.assign(p.value.data.begin(), p.value.data.end());
  entries.push_back(std::move(e));
}

void Checkpoint::put_bytes(const std::string& name, const std::string& bytes) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = DType::bytes;
  e.dims = {bytes.size()};
  e.bytes = bytes;
  entries.push_back(std::move(e));
}

template <typename T>
void Checkpoint::get(Parameter<T>& p) const {
  const auto* e = find(p.name);
  if (!e) throw FormatError("checkpoint has no tensor '" + p.name + "'");
  if (e->dtype == DType::bytes) throw FormatError("checkpoint entry '" + p.name + "' is not numeric");
  const std::vector<std::size_t> dims(e->dims.begin(), e->dims.end());
  if (dims != p.value.shape) {
    throw FormatError("checkpoint tensor '" + p.name + "' has shape " +
                      Tensor<T>(dims, std::vector<T>(e->values.size())).shape_string() +
                      ", expected " + p.value.shape_string());
  }
  for (std::size_t k = 0; k < e->values.size(); ++k) p.value.data[k] = static_cast<T>(e->values[k]);
}

std::string Checkpoint::get_bytes(const std::string& name) const {
  const auto* e = find(name);
  if (!e || e->dtype != DType::bytes) throw FormatError("checkpoint has no byte entry '" + name + "'");
  return e->bytes;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
    std::uint64_t n = 1;
    for (auto d : e.dims) {
      put<std::uint64_t>(out, d);
      n *= d;
    }
    switch (e.dtype) {
      case DType::bytes:
        if (n != e.bytes.size()) throw FormatError("checkpoint entry '" + e.name + "' size mismatch");
        out += e.bytes;
        break;
      case DType::f32:
        if (n != e.values.size()) throw FormatError("checkpoint entry '" + e.name + "' size mismatch");
        for (double v : e.values) put<float>(out, static_cast<float>(v));
        break;
      case DType::f64:
        if (n != e.values.size()) throw FormatError("checkpoint entry '" + e.name + "' size mismatch");
        for (double v : e.values) put<double>(out, v);
        break;
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& data) {
  Reader r(data);
  if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.bytes(r.get<std::uint32_t>());
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 2) throw FormatError("checkpoint entry '" + e.name + "' has unknown dtype");
    e.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint entry '" + e.name + "' has rank " + std::to_string(rank));
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.dims.push_back(r.get<std::uint64_t>());
      n *= e.dims.back();
    }
    if (n > data.size()) throw FormatError("checkpoint entry '" + e.name + "' is too large");
    if (e.dtype == DType::bytes) {
      e.bytes = r.bytes(n);
    } else {
      e.values.resize(n);
      for (auto& v : e.values) v = e.dtype == DType::f32 ? r.get<float>() : r.get<double>();
    }
    ckpt.entries.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string data = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

template void Checkpoint::put<float>(const Parameter<float>&);
template void Checkpoint::put<double>(const Parameter<double>&);
template void Checkpoint::get<float>(Parameter<float>&) const;
template void Checkpoint::get<double>(Parameter<double>&) const;

}  // namespace facecap::ad
