#include "facecap/stream/packet.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace facecap::stream {
namespace {

template <typename T>
void put_le(std::uint8_t* dst, T value) {
  using U = std::make_unsigned_t<
      std::conditional_t<std::is_floating_point_v<T>,
                         std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>, T>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t* src) {
  using U = std::make_unsigned_t<
      std::conditional_t<std::is_floating_point_v<T>,
                         std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>, T>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(src[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

constexpr std::size_t kOffVersion = 2;
constexpr std::size_t kOffKind = 3;
constexpr std::size_t kOffSensor = 4;
constexpr std::size_t kOffSeq = 5;
constexpr std::size_t kOffTimestamp = 9;
constexpr std::size_t kOffQuat = 17;
constexpr std::size_t kOffAccel = 33;
constexpr std::size_t kOffCrc = 45;

bool known_kind(std::uint8_t k) { return k <= static_cast<std::uint8_t>(PacketKind::tap_marker); }

}  // namespace

std::string to_string(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::short_buffer: return "short_buffer";
    case DecodeErrorKind::bad_length: return "bad_length";
    case DecodeErrorKind::bad_magic: return "bad_magic";
    case DecodeErrorKind::bad_version: return "bad_version";
    case DecodeErrorKind::bad_crc: return "bad_crc";
    case DecodeErrorKind::bad_kind: return "bad_kind";
    case DecodeErrorKind::non_finite: return "non_finite";
    case DecodeErrorKind::non_unit_quaternion: return "non_unit_quaternion";
  }
  return "unknown";
}

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bytes) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : bytes) {
    crc ^= static_cast<std::uint16_t>(b) << 8;
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
    }
  }
  return crc;
}

PacketBytes encode_packet(const SensorPacket& p) {
  if (!known_kind(static_cast<std::uint8_t>(p.kind))) {
    throw std::invalid_argument("encode_packet: unknown packet kind");
  }
  for (float v : p.q) {
    if (!std::isfinite(v)) throw std::invalid_argument("encode_packet: non-finite quaternion");
  }
  for (float v : p.a) {
    if (!std::isfinite(v)) throw std::invalid_argument("encode_packet: non-finite acceleration");
  }
  PacketBytes out{};
  out[0] = kMagic0;
  out[1] = kMagic1;
  out[kOffVersion] = kProtocolVersion;
  out[kOffKind] = static_cast<std::uint8_t>(p.kind);
  out[kOffSensor] = p.sensor_id;
  put_le(out.data() + kOffSeq, p.seq);
  put_le(out.data() + kOffTimestamp, p.device_timestamp_us);
  for (std::size_t i = 0; i < 4; ++i) put_le(out.data() + kOffQuat + 4 * i, p.q[i]);
  for (std::size_t i = 0; i < 3; ++i) put_le(out.data() + kOffAccel + 4 * i, p.a[i]);
  put_le(out.data() + kOffCrc, crc16_ccitt({out.data(), kOffCrc}));
  return out;
}

SensorPacket decode_packet(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPacketSize) {
    throw DecodeError(DecodeErrorKind::short_buffer,
                      "packet of " + std::to_string(bytes.size()) + " bytes, expected 47");
  }
  if (bytes.size() > kPacketSize) {
    throw DecodeError(DecodeErrorKind::bad_length,
                      "packet of " + std::to_string(bytes.size()) + " bytes, expected 47");
  }
  if (bytes[0] != kMagic0 || bytes[1] != kMagic1) {
    throw DecodeError(DecodeErrorKind::bad_magic, "bad packet magic");
  }
  if (bytes[kOffVersion] != kProtocolVersion) {
    throw DecodeError(DecodeErrorKind::bad_version,
                      "unsupported protocol version " + std::to_string(bytes[kOffVersion]));
  }
  const auto crc = get_le<std::uint16_t>(bytes.data() + kOffCrc);
  if (crc != crc16_ccitt(bytes.first(kOffCrc))) {
    throw DecodeError(DecodeErrorKind::bad_crc, "packet crc mismatch");
  }
  if (!known_kind(bytes[kOffKind])) {
    throw DecodeError(DecodeErrorKind::bad_kind,
                      "unknown packet kind " + std::to_string(bytes[kOffKind]));
  }
  SensorPacket p;
  p.kind = static_cast<PacketKind>(bytes[kOffKind]);
  p.sensor_id = bytes[kOffSensor];
  p.seq = get_le<std::uint32_t>(bytes.data() + kOffSeq);
  p.device_timestamp_us = get_le<std::uint64_t>(bytes.data() + kOffTimestamp);
  for (std::size_t i = 0; i < 4; ++i) p.q[i] = get_le<float>(bytes.data() + kOffQuat + 4 * i);
  for (std::size_t i = 0; i < 3; ++i) p.a[i] = get_le<float>(bytes.data() + kOffAccel + 4 * i);

  double n2 = 0.0;
  for (float v : p.q) {
    if (!std::isfinite(v)) throw DecodeError(DecodeErrorKind::non_finite, "non-finite quaternion");
    n2 += static_cast<double>(v) * v;
  }
  for (float v : p.a) {
    if (!std::isfinite(v)) {
      throw DecodeError(DecodeErrorKind::non_finite, "non-finite acceleration");
    }
  }
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-3) {
    throw DecodeError(DecodeErrorKind::non_unit_quaternion, "quaternion is not unit");
  }
  return p;
}

}  // namespace facecap::stream
