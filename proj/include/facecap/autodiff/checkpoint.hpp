#pragma once

// Binary parameter container, little-endian:
//   "IMFD" | u32 version (1) | u32 entry count | entries...
// entry:
//   u32 name length | name bytes (UTF-8) | u8 dtype (0 bytes, 1 f32, 2 f64)
//   | u32 rank | u64 dims[rank] | payload (product(dims) elements)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "facecap/autodiff/tensor.hpp"
#include "facecap/errors.hpp"

namespace facecap::ad {

enum class DType : std::uint8_t { bytes = 0, f32 = 1, f64 = 2 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;  // f32/f64 payload
  std::string bytes;           // bytes payload

  bool operator==(const CheckpointEntry&) const = default;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;

  template <typename T>
  void put(const Parameter<T>& p);
  void put_bytes(const std::string& name, const std::string& bytes);

  /// Copies a stored tensor into `p`; the shape must match.
  template <typename T>
  void get(Parameter<T>& p) const;
  std::string get_bytes(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError when unreadable and FormatError for a malformed container.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& data);

}  // namespace facecap::ad
