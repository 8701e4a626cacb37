#include <atomic>
#include <chrono>
#include <memory>
#include <thread>
#include <vector>

#include "doctest.h"
#include "swarmsync/rng.hpp"
#include "swarmsync/tcp_transport.hpp"
#include "swarmsync/transport.hpp"

using namespace swarmsync;

namespace {

VecX<double> payload_for(int worker, long round, Index dim) {
  VecX<double> v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = worker * 1000.0 + round * 10.0 + static_cast<double>(i);
  return v;
}

std::vector<std::string> loopback_addrs(int n, int base_port) {
  std::vector<std::string> addrs;
  for (int i = 0; i < n; ++i) addrs.push_back("127.0.0.1:" + std::to_string(base_port + i));
  return addrs;
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("in-process allgather with n=1 returns the own entry") {
  auto hub = std::make_shared<InProcessHub<double>>(1);
  InProcessTransport<double> t(hub);
  auto out = t.allgather(3, {0, 1.25, payload_for(0, 3, 4)});
  REQUIRE(out.size() == 1);
  CHECK(out[0].worker_index == 0);
  CHECK(out[0].loss == 1.25);
  CHECK(out[0].values == payload_for(0, 3, 4));
}

TEST_CASE("in-process allgather delivers identical ordered lists to all workers") {
  const int n = 4;
  auto hub = std::make_shared<InProcessHub<double>>(n);
  std::vector<std::vector<GatherEntry<double>>> results(n);
  std::vector<std::thread> threads;
  for (int w = 0; w < n; ++w) {
    threads.emplace_back([&, w] {
      InProcessTransport<double> t(hub);
      results[w] = t.allgather(0, {w, 0.1 * w, payload_for(w, 0, 6)});
    });
  }
  for (auto& th : threads) th.join();
  for (int w = 0; w < n; ++w) {
    REQUIRE(results[w].size() == 4);
    for (int i = 0; i < n; ++i) {
      CHECK(results[w][i].worker_index == i);
      CHECK(results[w][i].loss == results[0][i].loss);
      CHECK(results[w][i].values == results[0][i].values);  // bitwise
    }
  }
}

TEST_CASE("in-process allgather stays consistent across 50 rounds with random delays") {
  for (int n = 1; n <= 8; n += 7) {  // n = 1 and n = 8
    auto hub = std::make_shared<InProcessHub<double>>(n);
    std::vector<std::vector<std::vector<GatherEntry<double>>>> all(n);
    std::vector<std::thread> threads;
    for (int w = 0; w < n; ++w) {
      threads.emplace_back([&, w] {
        RngStream rng(1000 + w);
        InProcessTransport<double> t(hub);
        for (long round = 0; round < 50; ++round) {
          if (rng.below(3) == 0) {
            std::this_thread::sleep_for(std::chrono::microseconds(rng.below(300)));
          }
          all[w].push_back(t.allgather(round, {w, w + 0.5 * round, payload_for(w, round, 3)}));
        }
      });
    }
    for (auto& th : threads) th.join();
    for (long round = 0; round < 50; ++round) {
      for (int w = 0; w < n; ++w) {
        REQUIRE(all[w][round].size() == static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          CHECK(all[w][round][i].worker_index == i);
          CHECK(all[w][round][i].values == all[0][round][i].values);
        }
      }
    }
  }
}

TEST_CASE("a delayed worker with a stale round number aborts the collective") {
  auto hub = std::make_shared<InProcessHub<double>>(3);
  std::atomic<int> transport_errors{0};
  std::vector<std::thread> threads;
  for (int w = 0; w < 3; ++w) {
    threads.emplace_back([&, w] {
      try {
        // worker 2 lags one round behind the others
        const long round = (w == 2) ? 1 : 2;
        (void)hub->allgather(round, {w, 0.0, payload_for(w, round, 2)});
      } catch (const TransportError&) {
        ++transport_errors;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(transport_errors.load() == 3);
}

TEST_CASE("abort unblocks waiting workers") {
  auto hub = std::make_shared<InProcessHub<double>>(2);
  std::atomic<bool> aborted{false};
  std::thread waiter([&] {
    try {
      (void)hub->allgather(0, {0, 0.0, payload_for(0, 0, 2)});
    } catch (const TransportError&) {
      aborted = true;
    }
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  hub->abort("worker 1 failed");
  waiter.join();
  CHECK(aborted.load());
}

TEST_CASE("wire format encodes the documented big-endian layout") {
  std::vector<double> values = {1.0, -2.0};
  const auto bytes = encode_gather_message(1, 2, 1.5, values);
  REQUIRE(bytes.size() == 16 + 8 + 16);
  // round = 1, worker = 2
  const std::vector<std::uint8_t> head(bytes.begin(), bytes.begin() + 16);
  CHECK(head == std::vector<std::uint8_t>{0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 24});
  // loss 1.5 = 0x3FF8000000000000
  const std::vector<std::uint8_t> loss(bytes.begin() + 16, bytes.begin() + 24);
  CHECK(loss == std::vector<std::uint8_t>{0x3F, 0xF8, 0, 0, 0, 0, 0, 0});
  // 1.0 = 0x3FF0..., -2.0 = 0xC000...
  CHECK(bytes[24] == 0x3F);
  CHECK(bytes[25] == 0xF0);
  CHECK(bytes[32] == 0xC0);
  CHECK(bytes[33] == 0x00);

  const auto m = decode_gather_message(bytes);
  CHECK(m.round == 1);
  CHECK(m.worker == 2);
  CHECK(m.loss == 1.5);
  CHECK(m.values == values);
}

TEST_CASE("wire decode rejects malformed framing") {
  std::vector<double> values = {1.0};
  auto bytes = encode_gather_message(0, 0, 0.0, values);
  auto short_msg = bytes;
  short_msg.pop_back();
  CHECK_THROWS_AS((void)decode_gather_message(short_msg), FormatError);
  auto bad_len = bytes;
  bad_len[15] = 13;  // payload length not 8 + 8k
  CHECK_THROWS_AS((void)decode_gather_message(bad_len), FormatError);
}

TEST_CASE("wire round-trip preserves doubles bitwise") {
  RngStream rng(5);
  std::vector<double> values(64);
  for (auto& v : values) v = rng.uniform(-1e6, 1e6);
  values[0] = 0.0;
  values[1] = -0.0;
  values[2] = 1e-308;
  const auto bytes = encode_gather_message(7, 3, 0.125, values);
  const auto m = decode_gather_message(bytes);
  for (std::size_t i = 0; i < values.size(); ++i) {
    CHECK(std::memcmp(&m.values[i], &values[i], 8) == 0);
  }
}

TEST_CASE("tcp allgather on loopback matches the in-process result") {
  const int n = 3;
  const auto addrs = loopback_addrs(n, 39131);
  std::vector<std::vector<GatherEntry<double>>> results(n);
  std::vector<std::thread> threads;
  for (int w = 0; w < n; ++w) {
    threads.emplace_back([&, w] {
      TcpConfig cfg{addrs, 10.0};
      TcpTransport<double> t(w, cfg);
      for (long round = 0; round < 5; ++round) {
        results[w] = t.allgather(round, {w, 0.25 * w + round, payload_for(w, round, 8)});
      }
    });
  }
  for (auto& th : threads) th.join();
  for (int w = 0; w < n; ++w) {
    REQUIRE(results[w].size() == static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      CHECK(results[w][i].worker_index == i);
      CHECK(results[w][i].loss == 0.25 * i + 4);
      CHECK(results[w][i].values == payload_for(i, 4, 8));
    }
  }
}

TEST_CASE("tcp setup times out when a worker is missing") {
  const auto addrs = loopback_addrs(3, 39431);
  std::vector<std::thread> threads;
  std::atomic<int> timeouts{0};
  // workers 1 and 2 start; worker 0 never does
  for (int w = 1; w < 3; ++w) {
    threads.emplace_back([&, w] {
      try {
        TcpConfig cfg{addrs, 0.6};
        TcpTransport<double> t(w, cfg);
        (void)t.allgather(0, {w, 0.0, payload_for(w, 0, 2)});
      } catch (const TransportError&) {
        ++timeouts;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(timeouts.load() == 2);
}

}  // TEST_SUITE
