#include "swarmsync/tcp_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <chrono>
#include <cstring>
#include <thread>

namespace swarmsync {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(std::uint8_t(v >> s));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

struct AddrParts {
  std::string host;
  std::uint16_t port;
};

AddrParts parse_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon + 1 >= addr.size()) {
    throw ConfigError("tcp address must be host:port, got '" + addr + "'");
  }
  const std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("tcp address has a non-numeric port: '" + addr + "'");
  }
  if (port < 1 || port > 65535) throw ConfigError("tcp port out of range in '" + addr + "'");
  return {host, static_cast<std::uint16_t>(port)};
}

sockaddr_in make_sockaddr(const AddrParts& parts) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(parts.port);
  if (::inet_pton(AF_INET, parts.host.c_str(), &sa.sin_addr) != 1) {
    throw ConfigError("tcp address host must be an IPv4 literal, got '" + parts.host + "'");
  }
  return sa;
}

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    const ssize_t r = ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
    if (r <= 0) throw TransportError("tcp send failed: " + std::string(std::strerror(errno)));
    sent += static_cast<std::size_t>(r);
  }
}

// Reads exactly len bytes or throws; `deadline` is absolute.
void read_all(int fd, std::uint8_t* data, std::size_t len,
              std::chrono::steady_clock::time_point deadline, const std::string& who) {
  std::size_t got = 0;
  while (got < len) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) throw TransportError("tcp receive timeout waiting for " + who);
    const int wait_ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
    pollfd pfd{fd, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, std::max(1, wait_ms));
    if (pr == 0) throw TransportError("tcp receive timeout waiting for " + who);
    if (pr < 0) throw TransportError("tcp poll failed: " + std::string(std::strerror(errno)));
    const ssize_t r = ::recv(fd, data + got, len - got, 0);
    if (r == 0) throw TransportError("tcp connection closed by " + who);
    if (r < 0) throw TransportError("tcp recv failed: " + std::string(std::strerror(errno)));
    got += static_cast<std::size_t>(r);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_gather_message(std::uint32_t round, std::uint32_t worker, double loss,
                                                std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + 8 + 8 * values.size());
  put_u32(out, round);
  put_u32(out, worker);
  put_u64(out, 8 + 8 * static_cast<std::uint64_t>(values.size()));
  put_u64(out, std::bit_cast<std::uint64_t>(loss));
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

WireMessage decode_gather_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("gather message: truncated header");
  WireMessage m;
  m.round = get_u32(bytes.data());
  m.worker = get_u32(bytes.data() + 4);
  const std::uint64_t payload_len = get_u64(bytes.data() + 8);
  if (payload_len < 8 || (payload_len - 8) % 8 != 0) {
    throw FormatError("gather message: payload length " + std::to_string(payload_len) +
                      " is not 8 + 8k");
  }
  if (bytes.size() != 16 + payload_len) {
    throw FormatError("gather message: expected " + std::to_string(16 + payload_len) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  m.loss = std::bit_cast<double>(get_u64(bytes.data() + 16));
  const std::size_t count = (payload_len - 8) / 8;
  m.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    m.values[i] = std::bit_cast<double>(get_u64(bytes.data() + 24 + 8 * i));
  }
  return m;
}

TcpMesh::TcpMesh(int worker_index, const TcpConfig& cfg)
    : n_(static_cast<int>(cfg.listen_addrs.size())), me_(worker_index), timeout_sec_(cfg.timeout_sec) {
  if (n_ < 1) throw ConfigError("tcp transport needs at least one listen address");
  if (me_ < 0 || me_ >= n_) throw ConfigError("tcp worker index out of range");
  peer_fds_.assign(static_cast<std::size_t>(n_), -1);
  if (n_ == 1) return;
  connect_mesh(cfg);
}

void TcpMesh::connect_mesh(const TcpConfig& cfg) {
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(static_cast<long>(timeout_sec_ * 1000));

  const auto my_addr = make_sockaddr(parse_addr(cfg.listen_addrs[static_cast<std::size_t>(me_)]));
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("tcp socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&my_addr), sizeof my_addr) != 0) {
    throw TransportError("tcp bind failed on " + cfg.listen_addrs[static_cast<std::size_t>(me_)] + ": " +
                         std::strerror(errno));
  }
  if (::listen(listen_fd_, n_) != 0) throw TransportError("tcp listen failed");

  // Connect to every higher-index peer; each connection starts with a 4-byte
  // big-endian worker index so the acceptor can map it.
  for (int peer = me_ + 1; peer < n_; ++peer) {
    const auto peer_addr = make_sockaddr(parse_addr(cfg.listen_addrs[static_cast<std::size_t>(peer)]));
    int fd = -1;
    for (;;) {
      fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) throw TransportError("tcp socket() failed");
      if (::connect(fd, reinterpret_cast<const sockaddr*>(&peer_addr), sizeof peer_addr) == 0) break;
      ::close(fd);
      if (std::chrono::steady_clock::now() >= deadline) {
        throw TransportError("tcp connect to worker " + std::to_string(peer) + " timed out");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::vector<std::uint8_t> hello;
    put_u32(hello, static_cast<std::uint32_t>(me_));
    write_all(fd, hello.data(), hello.size());
    peer_fds_[static_cast<std::size_t>(peer)] = fd;
  }

  // Accept one connection from every lower-index peer.
  for (int expected = 0; expected < me_; ++expected) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) throw TransportError("tcp accept timed out; a lower-index worker is missing");
    const int wait_ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
    const int pr = ::poll(&pfd, 1, std::max(1, wait_ms));
    if (pr <= 0) throw TransportError("tcp accept timed out; a lower-index worker is missing");
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) throw TransportError("tcp accept failed");
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::uint8_t hello[4];
    read_all(fd, hello, 4, deadline, "handshake");
    const std::uint32_t peer = get_u32(hello);
    if (peer >= static_cast<std::uint32_t>(n_) || peer_fds_[peer] != -1) {
      ::close(fd);
      throw TransportError("tcp handshake announced invalid worker index " + std::to_string(peer));
    }
    peer_fds_[peer] = fd;
  }
}

TcpMesh::~TcpMesh() {
  for (int fd : peer_fds_) {
    if (fd >= 0) ::close(fd);
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

WireMessage TcpMesh::read_message(int fd, int peer) {
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(static_cast<long>(timeout_sec_ * 1000));
  const std::string who = "worker " + std::to_string(peer);
  std::uint8_t header[16];
  read_all(fd, header, 16, deadline, who);
  const std::uint64_t payload_len = get_u64(header + 8);
  if (payload_len < 8 || (payload_len - 8) % 8 != 0 || payload_len > (1ull << 32)) {
    throw TransportError("tcp message from " + who + " has invalid payload length " +
                         std::to_string(payload_len));
  }
  std::vector<std::uint8_t> buf(16 + payload_len);
  std::memcpy(buf.data(), header, 16);
  read_all(fd, buf.data() + 16, payload_len, deadline, who);
  return decode_gather_message(buf);
}

std::vector<WireMessage> TcpMesh::allgather(std::uint32_t round, double loss,
                                            std::span<const double> values) {
  std::vector<WireMessage> out(static_cast<std::size_t>(n_));
  out[static_cast<std::size_t>(me_)] =
      WireMessage{round, static_cast<std::uint32_t>(me_), loss, {values.begin(), values.end()}};
  if (n_ == 1) return out;

  const auto msg = encode_gather_message(round, static_cast<std::uint32_t>(me_), loss, values);

  // Sends run on a helper thread so two peers flooding each other with large
  // payloads cannot deadlock on full socket buffers.
  std::exception_ptr send_error;
  std::thread sender([&] {
    try {
      for (int peer = 0; peer < n_; ++peer) {
        if (peer == me_) continue;
        write_all(peer_fds_[static_cast<std::size_t>(peer)], msg.data(), msg.size());
      }
    } catch (...) {
      send_error = std::current_exception();
    }
  });

  std::exception_ptr recv_error;
  try {
    for (int peer = 0; peer < n_; ++peer) {
      if (peer == me_) continue;
      WireMessage m = read_message(peer_fds_[static_cast<std::size_t>(peer)], peer);
      if (m.round != round) {
        throw TransportError("allgather round mismatch: expected round " + std::to_string(round) +
                             ", worker " + std::to_string(peer) + " sent round " +
                             std::to_string(m.round));
      }
      if (m.worker != static_cast<std::uint32_t>(peer)) {
        throw TransportError("allgather: connection for worker " + std::to_string(peer) +
                             " delivered a message from worker " + std::to_string(m.worker));
      }
      out[m.worker] = std::move(m);
    }
  } catch (...) {
    recv_error = std::current_exception();
  }
  sender.join();
  if (recv_error) std::rethrow_exception(recv_error);
  if (send_error) std::rethrow_exception(send_error);
  return out;
}

}  // namespace swarmsync
