#pragma once

// Sensor datagram codec. Every datagram is exactly 47 bytes, little-endian:
//
//   offset size field
//   0      2    magic 0xFA 0xCE
//   2      1    version (1)
//   3      1    kind (0 data, 1 sync pulse, 2 tap marker, reserved)
//   4      1    sensor id
//   5      4    seq, u32
//   9      8    device timestamp, u64 microseconds
//   17     16   qw qx qy qz, f32
//   33     12   ax ay az, f32, m/s^2
//   45     2    CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) over bytes 0..44
//
// Sync pulses carry an identity quaternion and zero acceleration; their seq
// is the index k of the reference pulse emitted at host time k * period.
//
// Example: data packet, sensor 3, seq 1, timestamp 1000000, identity
// quaternion, zero acceleration:
//   fa ce 01 00 03 01 00 00 00 40 42 0f 00 00 00 00 00 00 00 80 3f 00 00 00
//   00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 ff 3b

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace facecap::stream {

inline constexpr std::size_t kPacketSize = 47;
inline constexpr std::uint8_t kMagic0 = 0xFA;
inline constexpr std::uint8_t kMagic1 = 0xCE;
inline constexpr std::uint8_t kProtocolVersion = 1;

enum class PacketKind : std::uint8_t { data = 0, sync_pulse = 1, tap_marker = 2 };

struct SensorPacket {
  PacketKind kind = PacketKind::data;
  std::uint8_t sensor_id = 0;
  std::uint32_t seq = 0;
  std::uint64_t device_timestamp_us = 0;
  std::array<float, 4> q{1.0f, 0.0f, 0.0f, 0.0f};  // w, x, y, z
  std::array<float, 3> a{0.0f, 0.0f, 0.0f};

  bool operator==(const SensorPacket&) const = default;
};

using PacketBytes = std::array<std::uint8_t, kPacketSize>;

enum class DecodeErrorKind {
  short_buffer,
  bad_length,
  bad_magic,
  bad_version,
  bad_crc,
  bad_kind,
  non_finite,
  non_unit_quaternion,
};

std::string to_string(DecodeErrorKind kind);

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  DecodeErrorKind kind() const { return kind_; }

 private:
  DecodeErrorKind kind_;
};

/// CRC-16/CCITT-FALSE.
std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bytes);

/// Throws std::invalid_argument for non-finite floats or an unknown kind.
PacketBytes encode_packet(const SensorPacket& packet);

/// Validates length, magic, version, crc, kind, finiteness and quaternion norm
/// (|q| within 1e-3 of 1), in that order.
SensorPacket decode_packet(std::span<const std::uint8_t> bytes);

}  // namespace facecap::stream
