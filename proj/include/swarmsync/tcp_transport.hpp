#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "swarmsync/errors.hpp"
#include "swarmsync/sync.hpp"
#include "swarmsync/transport.hpp"

namespace swarmsync {

// ---------------------------------------------------------------------------
// TCP collective over a full mesh. Wire format, per message:
//   4-byte big-endian round number
//   4-byte big-endian worker index
//   8-byte big-endian payload length
//   payload: loss as 8-byte IEEE-754 big-endian, then each value as
//            8-byte IEEE-754 big-endian
// Each worker sends its message to all peers and awaits n-1 receipts per
// round. Values travel as 64-bit floats regardless of the in-memory scalar.
// ---------------------------------------------------------------------------

struct TcpConfig {
  std::vector<std::string> listen_addrs;  // "host:port", one per worker
  double timeout_sec = 30.0;

  bool operator==(const TcpConfig&) const = default;
};

struct WireMessage {
  std::uint32_t round = 0;
  std::uint32_t worker = 0;
  double loss = 0.0;
  std::vector<double> values;
};

std::vector<std::uint8_t> encode_gather_message(std::uint32_t round, std::uint32_t worker, double loss,
                                                std::span<const double> values);
// Throws FormatError on bad framing.
WireMessage decode_gather_message(std::span<const std::uint8_t> bytes);

// Full-mesh socket state for one worker. Workers with a lower index accept
// from higher-index peers; higher-index workers connect (with retries, since
// peers may not be listening yet).
class TcpMesh {
 public:
  TcpMesh(int worker_index, const TcpConfig& cfg);
  ~TcpMesh();
  TcpMesh(const TcpMesh&) = delete;
  TcpMesh& operator=(const TcpMesh&) = delete;

  // Returns all n entries (own included) ordered by worker index.
  std::vector<WireMessage> allgather(std::uint32_t round, double loss, std::span<const double> values);

  int size() const { return n_; }

 private:
  void connect_mesh(const TcpConfig& cfg);
  WireMessage read_message(int fd, int peer);

  int n_ = 0;
  int me_ = 0;
  double timeout_sec_ = 30.0;
  int listen_fd_ = -1;
  std::vector<int> peer_fds_;  // indexed by worker, own slot -1
};

template <typename Scalar>
class TcpTransport : public Transport<Scalar> {
 public:
  TcpTransport(int worker_index, const TcpConfig& cfg) : mesh_(worker_index, cfg) {}

  std::vector<GatherEntry<Scalar>> allgather(long round, GatherEntry<Scalar> local) override {
    std::vector<double> values(static_cast<std::size_t>(local.values.size()));
    for (Index i = 0; i < local.values.size(); ++i) values[static_cast<std::size_t>(i)] = static_cast<double>(local.values[i]);
    auto messages = mesh_.allgather(static_cast<std::uint32_t>(round), local.loss, values);
    std::vector<GatherEntry<Scalar>> out;
    out.reserve(messages.size());
    for (const auto& m : messages) {
      GatherEntry<Scalar> e;
      e.worker_index = static_cast<int>(m.worker);
      e.loss = m.loss;
      e.values.resize(static_cast<Index>(m.values.size()));
      for (std::size_t i = 0; i < m.values.size(); ++i) e.values[static_cast<Index>(i)] = static_cast<Scalar>(m.values[i]);
      out.push_back(std::move(e));
    }
    return out;
  }

 private:
  TcpMesh mesh_;
};

}  // namespace swarmsync
