#pragma once

// Thin RAII wrapper over an IPv4 UDP socket.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace facecap::stream {

inline constexpr std::uint16_t kDefaultPort = 47500;

class SocketError : public std::runtime_error {
 public:
  SocketError(const std::string& what, int err = 0, bool address_in_use = false)
      : std::runtime_error(what), errno_(err), address_in_use_(address_in_use) {}
  int error_number() const { return errno_; }
  bool address_in_use() const { return address_in_use_; }

 private:
  int errno_;
  bool address_in_use_;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;
};

class UdpSocket {
 public:
  /// Unbound socket, suitable for sending.
  UdpSocket();
  /// Socket bound to `local` (port 0 picks an ephemeral port).
  explicit UdpSocket(const Endpoint& local);
  ~UdpSocket();

  UdpSocket(UdpSocket&& other) noexcept;
  UdpSocket& operator=(UdpSocket&& other) noexcept;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  std::uint16_t local_port() const;

  void send_to(const Endpoint& dst, std::span<const std::uint8_t> bytes);

  /// Waits up to `timeout` for one datagram; returns its length (possibly
  /// truncated to the buffer) or nullopt on timeout.
  std::optional<std::size_t> receive(std::span<std::uint8_t> buffer,
                                     std::chrono::milliseconds timeout);

  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

}  // namespace facecap::stream
