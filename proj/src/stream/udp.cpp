#include "facecap/stream/udp.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <utility>

namespace facecap::stream {
namespace {

[[noreturn]] void fail(const std::string& what) {
  const int err = errno;
  throw SocketError(what + ": " + std::strerror(err), err, err == EADDRINUSE);
}

sockaddr_in to_sockaddr(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
    throw SocketError("invalid IPv4 address '" + ep.host + "'");
  }
  return addr;
}

int open_socket() {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) fail("socket");
  return fd;
}

}  // namespace

UdpSocket::UdpSocket() : fd_(open_socket()) {}

UdpSocket::UdpSocket(const Endpoint& local) : fd_(open_socket()) {
  int rcvbuf = 8 << 20;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof(rcvbuf));
  const sockaddr_in addr = to_sockaddr(local);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    ::close(fd_);
    fd_ = -1;
    errno = err;
    fail("bind " + local.host + ":" + std::to_string(local.port));
  }
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) ::close(fd_);
}

UdpSocket::UdpSocket(UdpSocket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}

UdpSocket& UdpSocket::operator=(UdpSocket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

std::uint16_t UdpSocket::local_port() const {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) fail("getsockname");
  return ntohs(addr.sin_port);
}

void UdpSocket::send_to(const Endpoint& dst, std::span<const std::uint8_t> bytes) {
  const sockaddr_in addr = to_sockaddr(dst);
  for (;;) {
    const ssize_t n = ::sendto(fd_, bytes.data(), bytes.size(), 0,
                               reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    if (n >= 0) return;
    if (errno == EINTR) continue;
    fail("sendto");
  }
}

std::optional<std::size_t> UdpSocket::receive(std::span<std::uint8_t> buffer,
                                              std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  for (;;) {
    const int r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (r == 0) return std::nullopt;
    if (r < 0) {
      if (errno == EINTR) continue;
      fail("poll");
    }
    const ssize_t n = ::recv(fd_, buffer.data(), buffer.size(), MSG_TRUNC);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("recv");
    }
    return static_cast<std::size_t>(n);
  }
}

}  // namespace facecap::stream
