#pragma once

// Two ports (client and server VM) wired back to back through simulated NICs.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cvmio/devsim.hpp"
#include "cvmio/mem.hpp"
#include "cvmio/pools.hpp"

namespace cvmio {

struct TestbedConfig {
  PortConfig port{PoolConfig{1024, kDefaultMbufSize, true, 0}, 256, true};
  LinkModel link{};
  bool instrument = false;
  bool capture = false;
  bool trace = false;
};

class Testbed {
 public:
  explicit Testbed(const TestbedConfig& cfg = {}) : cfg_(cfg), mem_(cfg.instrument) {
    cfg.link.validate();
    std::uint64_t priv = PortContext::private_bytes_needed(cfg.port) + 4096;
    std::uint64_t shared = PortContext::shared_bytes_needed(cfg.port) + 4096;
    client_private_ = mem_.create_arena(RegionKind::Private, priv);
    client_shared_ = mem_.create_arena(RegionKind::Shared, shared);
    server_private_ = mem_.create_arena(RegionKind::Private, priv);
    server_shared_ = mem_.create_arena(RegionKind::Shared, shared);
    mem_.register_shared(client_shared_);
    mem_.register_shared(server_shared_);
    client_ = std::make_unique<PortContext>(mem_, client_private_, client_shared_, cfg.port);
    server_ = std::make_unique<PortContext>(mem_, server_private_, server_shared_, cfg.port);
    nics_ = loopback_pair(mem_, *client_, *server_, cfg.link);
    nics_.a_to_b->set_capture(cfg.capture);
    nics_.b_to_a->set_capture(cfg.capture);
    nics_.a->set_trace(cfg.trace);
    nics_.b->set_trace(cfg.trace);
  }

  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  const TestbedConfig& config() const { return cfg_; }
  Memory& memory() { return mem_; }
  PortContext& client() { return *client_; }
  PortContext& server() { return *server_; }
  SimNic& client_nic() { return *nics_.a; }
  SimNic& server_nic() { return *nics_.b; }
  Link& client_to_server() { return *nics_.a_to_b; }
  Link& server_to_client() { return *nics_.b_to_a; }

  std::vector<RegionId> shared_regions() const { return {client_shared_, server_shared_}; }
  std::vector<RegionId> private_regions() const { return {client_private_, server_private_}; }

  std::size_t step_nics(std::uint64_t now) { return nics_.a->step(now) + nics_.b->step(now); }

  std::optional<std::uint64_t> next_due() {
    auto a = nics_.a->next_due();
    auto b = nics_.b->next_due();
    if (a && b) return std::min(*a, *b);
    return a ? a : b;
  }

  /// True if the pattern occurs in any shared arena or any captured frame.
  bool device_observable(std::span<const std::uint8_t> needle) const {
    if (mem_.shared_contains(needle)) return true;
    for (const Link* l : {nics_.a_to_b.get(), nics_.b_to_a.get()})
      for (const auto& f : l->capture())
        if (std::search(f.begin(), f.end(), needle.begin(), needle.end()) != f.end()) return true;
    return false;
  }

  /// Orderly shutdown of every shared region.
  void teardown() { mem_.zero_and_release(); }

 private:
  TestbedConfig cfg_;
  Memory mem_;
  RegionId client_private_ = 0, client_shared_ = 0, server_private_ = 0, server_shared_ = 0;
  std::unique_ptr<PortContext> client_;
  std::unique_ptr<PortContext> server_;
  NicPair nics_;
};

/// Layout of the probe packets used by the workloads:
///   [src u32][dst u32][seq u32][kind u8][filler ...]
namespace probe {
inline constexpr std::uint32_t kClientAddr = 0x0A000001;
inline constexpr std::uint32_t kServerAddr = 0x0A000002;
inline constexpr std::uint32_t kMinSize = 16;

enum class Kind : std::uint8_t { Echo = 1, Syn = 2, SynAck = 3, AckData = 4 };

struct Header {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint32_t seq = 0;
  Kind kind = Kind::Echo;
};

inline std::uint8_t filler(std::uint32_t seq, std::size_t i) {
  return static_cast<std::uint8_t>(seq * 131u + i * 7u + 1u);
}

inline void write(std::span<std::uint8_t> d, const Header& h) {
  std::memcpy(d.data(), &h.src, 4);
  std::memcpy(d.data() + 4, &h.dst, 4);
  std::memcpy(d.data() + 8, &h.seq, 4);
  d[12] = static_cast<std::uint8_t>(h.kind);
  for (std::size_t i = 13; i < d.size(); ++i) d[i] = filler(h.seq, i);
}

inline Header read(std::span<const std::uint8_t> d) {
  Header h;
  if (d.size() < kMinSize) return h;
  std::memcpy(&h.src, d.data(), 4);
  std::memcpy(&h.dst, d.data() + 4, 4);
  std::memcpy(&h.seq, d.data() + 8, 4);
  h.kind = static_cast<Kind>(d[12]);
  return h;
}

/// Swap src and dst and set a new kind, in place.
inline void turn_around(std::span<std::uint8_t> d, Kind kind) {
  std::uint8_t tmp[4];
  std::memcpy(tmp, d.data(), 4);
  std::memcpy(d.data(), d.data() + 4, 4);
  std::memcpy(d.data() + 4, tmp, 4);
  d[12] = static_cast<std::uint8_t>(kind);
}
}  // namespace probe

}  // namespace cvmio
