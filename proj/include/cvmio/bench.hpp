#pragma once

// Workload harness: echo and handshake workloads over the simulated link,
// driven either by a deterministic discrete-event scheduler or by real
// threads; a per-second load model for connection ramps; the app-cost
// saturation sweep used to compare crypto offload modes.
//
// Processing costs are charged only to the server VM (the system under
// test). The client is an ideal load generator with zero cost.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cvmio/factors.hpp"
#include "cvmio/ipsec.hpp"
#include "cvmio/stats.hpp"
#include "cvmio/testbed.hpp"

namespace cvmio {

enum class Workload : std::uint8_t { Echo, UdpLoad, TcpLikeLoad, IpsecLoad };
enum class NotificationKind : std::uint8_t { Polling, EmulatedInterrupt };
enum class CopyModel : std::uint8_t { SingleCopy, NoCopy };
enum class TimeMode : std::uint8_t { Deterministic, WallClock };

constexpr const char* to_string(Workload w) {
  switch (w) {
    case Workload::Echo: return "echo";
    case Workload::UdpLoad: return "udp_load";
    case Workload::TcpLikeLoad: return "tcp_like_load";
    case Workload::IpsecLoad: return "ipsec_load";
  }
  return "?";
}

struct Notification {
  NotificationKind kind = NotificationKind::Polling;
  std::uint64_t exit_cost_ns = 0;

  /// "polling" or "interrupt:<ns>"
  static Notification parse(const std::string& s) {
    if (s == "polling") return {};
    const std::string prefix = "interrupt:";
    if (s.rfind(prefix, 0) == 0) {
      std::string v = s.substr(prefix.size());
      try {
        std::size_t used = 0;
        unsigned long long ns = std::stoull(v, &used);
        if (used == v.size() && !v.empty() && v[0] != '-') return {NotificationKind::EmulatedInterrupt, ns};
      } catch (const std::exception&) {
      }
    }
    throw Error(Errc::ConfigInvalid, "notification must be polling or interrupt:<ns>, got '" + s + "'");
  }

  std::string str() const {
    return kind == NotificationKind::Polling ? "polling" : "interrupt:" + std::to_string(exit_cost_ns);
  }
};

inline constexpr std::uint8_t kDefaultSaKey[16] = {0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6,
                                                   0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f, 0x3c};

inline SaConfig default_sa() {
  SaConfig c;
  c.spi = 0x1001;
  std::copy(std::begin(kDefaultSaKey), std::end(kDefaultSaKey), c.key.begin());
  c.salt = 0xCAFEF00D;
  return c;
}

struct BenchConfig {
  Workload workload = Workload::Echo;
  std::uint32_t payload = 64;    // bytes per packet including the probe header
  double rate = 5000;            // packets per second per connection
  std::uint32_t connections = 1;
  double duration_s = 1.0;
  Notification notification;
  CopyModel copy = CopyModel::SingleCopy;
  std::optional<OffloadMode> ipsec;
  std::uint64_t seed = 1;
  TimeMode time = TimeMode::Deterministic;

  LinkModel link{};
  CostProfile profile = fitted_profile();
  VmConfiguration vm = VmConfiguration::SnpShadowPool;
  double app_cost_ns = 0;     // extra application work per packet
  double crypto_cost_ns = 0;  // per AES operation
  double handoff_ns = 0;      // inline mode: latency of one queue handoff

  std::uint32_t ring_capacity = 256;
  std::uint32_t mbuf_count = 1024;
  std::uint32_t mbuf_size = kDefaultMbufSize;
  SaConfig sa = default_sa();

  // Load model.
  double bandwidth_bps = 8e9;
  double capacity_pps = 0;  // 0: bandwidth / (payload * 8)
  double hold_s = 30;

  bool ipsec_on() const { return ipsec.has_value(); }

  std::uint32_t data_room() const { return mbuf_size - kMetaOverhead; }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(Errc::ConfigInvalid, m); };
    if (payload < probe::kMinSize) bad("payload must be >= " + std::to_string(probe::kMinSize));
    if (mbuf_size < kMetaOverhead + 64) bad("mbuf_size too small");
    std::uint32_t limit = ipsec_on() ? data_room() - kEspOverhead : data_room();
    if (payload > limit) bad("payload " + std::to_string(payload) + " exceeds " + std::to_string(limit));
    if (!(rate > 0)) bad("rate must be > 0");
    if (connections == 0) bad("connections must be > 0");
    if (!(duration_s > 0)) bad("duration must be > 0");
    if (app_cost_ns < 0 || crypto_cost_ns < 0 || handoff_ns < 0) bad("costs must be >= 0");
    if (workload == Workload::IpsecLoad && !ipsec_on()) bad("ipsec workload needs an ipsec mode");
    if (!(bandwidth_bps > 0) || capacity_pps < 0 || !(hold_s > 0)) bad("load parameters must be positive");
    link.validate();
  }
};

// ---------------------------------------------------------------------------

/// Single-threaded discrete-event scheduler; ties run in scheduling order.
class EventScheduler {
 public:
  using Action = std::function<void()>;

  std::uint64_t now() const { return now_; }

  void at(std::uint64_t t, Action a) {
    if (t < now_) t = now_;
    q_.push(Item{t, seq_++, std::move(a)});
  }

  bool step() {
    if (q_.empty()) return false;
    Item it = q_.top();
    q_.pop();
    now_ = it.t;
    it.action();
    return true;
  }

  void run() {
    while (step()) {
    }
  }

  std::size_t pending() const { return q_.size(); }

 private:
  struct Item {
    std::uint64_t t;
    std::uint64_t seq;
    Action action;
  };
  struct Later {
    bool operator()(const Item& a, const Item& b) const { return a.t != b.t ? a.t > b.t : a.seq > b.seq; }
  };
  std::priority_queue<Item, std::vector<Item>, Later> q_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
};

/// floor(bandwidth / (payload * 8 * rate)).
inline std::uint64_t max_connections(double bandwidth_bps, double payload_bytes, double rate_pps) {
  if (!(bandwidth_bps > 0) || !(payload_bytes > 0) || !(rate_pps > 0))
    throw Error(Errc::ZeroArgument, "bandwidth, payload and rate must be positive");
  return static_cast<std::uint64_t>(std::floor(bandwidth_bps / (payload_bytes * 8.0 * rate_pps)));
}

struct EchoResult {
  LatencyStats stats;
  std::vector<std::uint64_t> rtts;  // per answered request, in send order
  std::uint64_t requests = 0;
  std::uint64_t answered = 0;
  std::uint64_t exits = 0;
  std::uint64_t link_lost = 0;
  std::uint64_t tx_rejected = 0;
  std::uint64_t server_delivered = 0;  // handshake data messages consumed
  std::map<std::string, std::uint64_t> client_counters;
  std::map<std::string, std::uint64_t> server_counters;
  CryptoCounter server_crypto;
  CryptoCounter client_crypto;
  std::uint64_t server_app_aes_ops = 0;
};

namespace detail {

inline TestbedConfig testbed_config(const BenchConfig& cfg) {
  TestbedConfig t;
  t.port.pools = PoolConfig{cfg.mbuf_count, cfg.mbuf_size, true, 0};
  t.port.ring_capacity = cfg.ring_capacity;
  t.link = cfg.link;
  t.link.jitter_seed = cfg.seed;
  return t;
}

inline SaConfig reverse_sa(const SaConfig& c) {
  SaConfig r = c;
  r.spi = c.spi + 1;
  return r;
}

/// Deterministic run of the echo or handshake workload.
class EchoSim {
 public:
  explicit EchoSim(const BenchConfig& cfg)
      : cfg_(cfg),
        tb_(testbed_config(cfg)),
        c_out_(cfg.sa, SaDirection::Outbound),
        s_in_(cfg.sa, SaDirection::Inbound),
        s_out_(reverse_sa(cfg.sa), SaDirection::Outbound),
        c_in_(reverse_sa(cfg.sa), SaDirection::Inbound) {
    proc_ns_ = predict_latency(cfg.vm, cfg.profile, OverheadFactor::BounceBufferCopy) + cfg.app_cost_ns;
    if (cfg.ipsec == OffloadMode::EmulatedInline) worker_ = inline_attach(tb_.server(), s_in_, s_out_);
    period_ns_ = 1e9 / cfg.rate;
    per_conn_ = static_cast<std::uint64_t>(std::llround(cfg.rate * cfg.duration_s));
    if (per_conn_ == 0) per_conn_ = 1;
  }

  EchoResult run() {
    for (std::uint32_t c = 0; c < cfg_.connections; ++c) {
      double offset = period_ns_ * c / cfg_.connections;
      sched_.at(static_cast<std::uint64_t>(std::llround(offset)), [this, c] { send_request(c, 0); });
    }
    sched_.run();
    EchoResult r = std::move(res_);
    r.link_lost = tb_.client_to_server().lost() + tb_.server_to_client().lost();
    std::uint64_t unanswered = r.requests - r.answered;
    r.stats = compute_stats(r.rtts, unanswered);
    r.client_counters = tb_.client().counter_map();
    r.server_counters = tb_.server().counter_map();
    r.client_crypto = c_ctr_;
    r.server_crypto = worker_ ? worker_->counter() : s_ctr_;
    return r;
  }

  Testbed& testbed() { return tb_; }

 private:
  bool handshake() const { return cfg_.workload == Workload::TcpLikeLoad; }

  double copy_ns(std::uint32_t bytes) const {
    if (cfg_.copy == CopyModel::NoCopy) return 0.0;
    return cfg_.profile.copy_fixed_ns + cfg_.profile.copy_ns_per_byte * bytes;
  }

  std::uint32_t wire_len(std::uint32_t plain) const { return cfg_.ipsec_on() ? esp_wire_length(plain) : plain; }

  static std::uint64_t ns(double x) { return static_cast<std::uint64_t>(std::llround(x)); }

  void send_request(std::uint32_t conn, std::uint64_t j) {
    std::uint64_t now = sched_.now();
    if (j + 1 < per_conn_) {
      double next = period_ns_ * (static_cast<double>(j + 1) + static_cast<double>(conn) / cfg_.connections);
      sched_.at(ns(next), [this, conn, j] { send_request(conn, j + 1); });
    }
    auto seq = static_cast<std::uint32_t>(send_time_.size());
    send_time_.push_back(now);
    ++res_.requests;
    client_send(seq, handshake() ? probe::Kind::Syn : probe::Kind::Echo);
  }

  void client_send(std::uint32_t seq, probe::Kind kind) {
    std::uint64_t now = sched_.now();
    PortContext& port = tb_.client();
    auto b = port.try_alloc();
    if (!b) {
      ++res_.tx_rejected;
      return;
    }
    b->set_pkt_len(cfg_.payload);
    probe::write(b->payload(), {probe::kClientAddr, probe::kServerAddr, seq, kind});
    std::vector<PacketBuffer> v{*b};
    std::size_t sent = cfg_.ipsec_on() ? lookaside_tx(port, c_out_, v, c_ctr_) : port.tx_burst(v);
    if (!sent) {
      ++res_.tx_rejected;
      port.free(*b);
      return;
    }
    tb_.client_nic().step_tx(now);
    wake_after_tx(tb_.client_to_server(), true);
  }

  // Schedule a receive-side NIC step for every distinct due time.
  void wake_after_tx(Link& link, bool to_server) {
    auto due = link.next_due();
    if (!due) return;
    auto& pending = to_server ? server_wakes_ : client_wakes_;
    if (!pending.insert(*due).second) return;
    std::uint64_t t = *due;
    sched_.at(t, [this, to_server, t] {
      (to_server ? server_wakes_ : client_wakes_).erase(t);
      if (to_server) server_wake();
      else client_wake();
    });
  }

  void server_wake() {
    std::uint64_t now = sched_.now();
    tb_.server_nic().step_rx(now);
    wake_after_tx(tb_.client_to_server(), true);
    if (worker_) pump_inline();
    else server_poll();
  }

  void server_poll() {
    std::uint64_t now = sched_.now();
    PortContext& port = tb_.server();
    std::vector<PacketBuffer> bufs;
    std::uint64_t aes_before = thread_aead_ops();
    if (cfg_.ipsec == OffloadMode::LookAside) bufs = lookaside_rx(port, s_in_, cfg_.ring_capacity, s_ctr_);
    else bufs = port.rx_burst(cfg_.ring_capacity);
    res_.server_app_aes_ops += thread_aead_ops() - aes_before;
    for (const PacketBuffer& b : bufs) {
      std::uint64_t start = std::max(now, app_free_);
      if (cfg_.notification.kind == NotificationKind::EmulatedInterrupt) {
        start += cfg_.notification.exit_cost_ns;
        ++res_.exits;
      }
      std::uint32_t len = b.pkt_len();
      double service = proc_ns_ + copy_ns(wire_len(len)) * 2;
      if (cfg_.ipsec == OffloadMode::LookAside) service += 2 * cfg_.crypto_cost_ns;
      std::uint64_t done = start + ns(service);
      app_free_ = done;
      sched_.at(done, [this, b] { server_reply(b); });
    }
  }

  // Inline mode: the crypto worker owns the rings. Every packet it has
  // decrypted since the last call is booked on the crypto resource and then
  // handed to the application.
  void pump_inline() {
    std::uint64_t now = sched_.now();
    worker_->step(cfg_.ring_capacity);
    std::uint64_t dec = worker_->counter().decrypted;
    for (; inline_seen_ < dec; ++inline_seen_) {
      std::uint64_t start = std::max(now, crypto_free_);
      if (cfg_.notification.kind == NotificationKind::EmulatedInterrupt) {
        start += cfg_.notification.exit_cost_ns;
        ++res_.exits;
      }
      std::uint64_t done = start + ns(cfg_.crypto_cost_ns);
      crypto_free_ = done;
      sched_.at(done + ns(cfg_.handoff_ns), [this] { inline_app(); });
    }
  }

  void inline_app() {
    std::uint64_t now = sched_.now();
    auto got = worker_->rx(1);
    if (got.empty()) return;
    PacketBuffer b = got.front();
    std::uint32_t len = b.pkt_len();
    std::uint64_t start = std::max(now, app_free_);
    std::uint64_t done = start + ns(proc_ns_ + copy_ns(wire_len(len)) * 2);
    app_free_ = done;
    sched_.at(done + ns(cfg_.handoff_ns), [this, b] {
      std::uint64_t t = sched_.now();
      std::uint64_t s = std::max(t, crypto_free_);
      std::uint64_t d = s + ns(cfg_.crypto_cost_ns);
      crypto_free_ = d;
      sched_.at(d, [this, b] { server_reply(b); });
    });
  }

  void server_reply(PacketBuffer b) {
    std::uint64_t now = sched_.now();
    PortContext& port = tb_.server();
    auto h = probe::read(b.payload());
    if (h.kind == probe::Kind::AckData) {
      ++res_.server_delivered;
      port.free(b);
      return;
    }
    probe::turn_around(b.payload(), h.kind == probe::Kind::Syn ? probe::Kind::SynAck : probe::Kind::Echo);
    std::size_t sent = 0;
    if (worker_) {
      sent = worker_->tx(std::span<const PacketBuffer>(&b, 1));
      pump_inline();
    } else {
      std::vector<PacketBuffer> v{b};
      std::uint64_t aes_before = thread_aead_ops();
      sent = cfg_.ipsec == OffloadMode::LookAside ? lookaside_tx(port, s_out_, v, s_ctr_) : port.tx_burst(v);
      res_.server_app_aes_ops += thread_aead_ops() - aes_before;
    }
    if (!sent) {
      ++res_.tx_rejected;
      port.free(b);
      return;
    }
    tb_.server_nic().step_tx(now);
    wake_after_tx(tb_.server_to_client(), false);
  }

  void client_wake() {
    std::uint64_t now = sched_.now();
    tb_.client_nic().step_rx(now);
    wake_after_tx(tb_.server_to_client(), false);
    PortContext& port = tb_.client();
    std::vector<PacketBuffer> bufs = cfg_.ipsec_on() ? lookaside_rx(port, c_in_, cfg_.ring_capacity, c_ctr_)
                                                     : port.rx_burst(cfg_.ring_capacity);
    for (const PacketBuffer& b : bufs) {
      auto h = probe::read(b.payload());
      port.free(b);
      if (h.seq >= send_time_.size() || answered_.count(h.seq)) continue;
      answered_.insert(h.seq);
      ++res_.answered;
      res_.rtts.push_back(now - send_time_[h.seq]);
      if (h.kind == probe::Kind::SynAck) client_send(h.seq, probe::Kind::AckData);
    }
  }

  BenchConfig cfg_;
  Testbed tb_;
  EventScheduler sched_;
  SecurityAssociation c_out_, s_in_, s_out_, c_in_;
  CryptoCounter c_ctr_, s_ctr_;
  std::unique_ptr<CryptoWorker> worker_;
  double proc_ns_ = 0;
  double period_ns_ = 0;
  std::uint64_t per_conn_ = 0;
  std::uint64_t app_free_ = 0;
  std::uint64_t crypto_free_ = 0;
  std::uint64_t inline_seen_ = 0;
  std::vector<std::uint64_t> send_time_;
  std::set<std::uint32_t> answered_;
  std::set<std::uint64_t> server_wakes_, client_wakes_;
  EchoResult res_;
};

inline void spin_for(std::uint64_t ns) {
  if (ns == 0) return;
  auto end = std::chrono::steady_clock::now() + std::chrono::nanoseconds(ns);
  while (std::chrono::steady_clock::now() < end) {
  }
}

/// Threaded run: one thread per NIC, client, server and (inline) crypto
/// worker. Clock reads happen once per loop pass, not per packet.
inline EchoResult run_echo_wall(const BenchConfig& cfg) {
  Testbed tb(testbed_config(cfg));
  SecurityAssociation c_out(cfg.sa, SaDirection::Outbound), s_in(cfg.sa, SaDirection::Inbound);
  SecurityAssociation s_out(reverse_sa(cfg.sa), SaDirection::Outbound), c_in(reverse_sa(cfg.sa), SaDirection::Inbound);
  CryptoCounter c_ctr, s_ctr;
  std::unique_ptr<CryptoWorker> worker;
  if (cfg.ipsec == OffloadMode::EmulatedInline) worker = inline_attach(tb.server(), s_in, s_out);

  using clock = std::chrono::steady_clock;
  const auto epoch = clock::now();
  auto now_ns = [&] {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - epoch).count());
  };
  std::atomic<bool> stop_all{false}, stop_server{false};
  const bool handshake = cfg.workload == Workload::TcpLikeLoad;
  const double proc_ns = predict_latency(cfg.vm, cfg.profile, OverheadFactor::BounceBufferCopy) + cfg.app_cost_ns;
  auto copy_ns = [&](std::uint32_t bytes) {
    return cfg.copy == CopyModel::NoCopy ? 0.0 : cfg.profile.copy_fixed_ns + cfg.profile.copy_ns_per_byte * bytes;
  };

  EchoResult res;
  std::atomic<std::uint64_t> exits{0}, delivered{0}, server_rejected{0}, app_aes{0};

  auto nic_loop = [&](SimNic& nic) {
    while (!stop_all.load(std::memory_order_acquire))
      if (nic.step(now_ns()) == 0) std::this_thread::yield();
  };

  auto server_loop = [&] {
    PortContext& port = tb.server();
    while (!stop_server.load(std::memory_order_acquire)) {
      std::vector<PacketBuffer> bufs;
      if (worker) bufs = worker->rx(cfg.ring_capacity);
      else if (cfg.ipsec == OffloadMode::LookAside) bufs = lookaside_rx(port, s_in, cfg.ring_capacity, s_ctr);
      else bufs = port.rx_burst(cfg.ring_capacity);
      if (bufs.empty()) {
        if (!worker) port.reclaim_tx();
        std::this_thread::yield();
        continue;
      }
      for (const PacketBuffer& b : bufs) {
        std::uint32_t len = b.pkt_len();
        std::uint32_t wl = cfg.ipsec_on() ? esp_wire_length(len) : len;
        double cost = proc_ns + 2 * copy_ns(wl);
        if (cfg.notification.kind == NotificationKind::EmulatedInterrupt) {
          cost += double(cfg.notification.exit_cost_ns);
          exits.fetch_add(1, std::memory_order_relaxed);
        }
        spin_for(static_cast<std::uint64_t>(cost));
        auto h = probe::read(b.payload());
        if (h.kind == probe::Kind::AckData) {
          delivered.fetch_add(1, std::memory_order_relaxed);
          if (worker) tb.server().free(b);
          else port.free(b);
          continue;
        }
        probe::turn_around(b.payload(), h.kind == probe::Kind::Syn ? probe::Kind::SynAck : probe::Kind::Echo);
        std::size_t sent = 0;
        for (int attempt = 0; attempt < 1000 && !sent; ++attempt) {
          if (worker) {
            sent = worker->tx(std::span<const PacketBuffer>(&b, 1));
          } else {
            std::vector<PacketBuffer> v{b};
            std::uint64_t before = thread_aead_ops();
            sent = cfg.ipsec == OffloadMode::LookAside ? lookaside_tx(port, s_out, v, s_ctr) : port.tx_burst(v);
            app_aes.fetch_add(thread_aead_ops() - before, std::memory_order_relaxed);
          }
          if (!sent) std::this_thread::yield();
        }
        if (!sent) {
          server_rejected.fetch_add(1, std::memory_order_relaxed);
          port.free(b);
        }
      }
    }
  };

  auto crypto_loop = [&] {
    while (!stop_server.load(std::memory_order_acquire))
      if (worker->step(32) == 0) std::this_thread::yield();
  };

  std::vector<std::uint64_t> send_time;
  std::vector<std::uint8_t> answered;
  auto client_loop = [&] {
    PortContext& port = tb.client();
    const double period = 1e9 / (cfg.rate * cfg.connections);
    const auto total = static_cast<std::uint64_t>(std::llround(cfg.rate * cfg.duration_s)) * cfg.connections;
    send_time.reserve(total);
    answered.assign(total, 0);
    const std::uint64_t end_send = static_cast<std::uint64_t>(cfg.duration_s * 1e9);
    const std::uint64_t end_drain = end_send + 200'000'000;
    std::uint64_t next = 0;
    auto send = [&](std::uint32_t seq, probe::Kind kind) {
      auto b = port.try_alloc();
      if (!b) {
        ++res.tx_rejected;
        return;
      }
      b->set_pkt_len(cfg.payload);
      probe::write(b->payload(), {probe::kClientAddr, probe::kServerAddr, seq, kind});
      std::vector<PacketBuffer> v{*b};
      std::size_t ok = cfg.ipsec_on() ? lookaside_tx(port, c_out, v, c_ctr) : port.tx_burst(v);
      if (!ok) {
        ++res.tx_rejected;
        port.free(*b);
      }
    };
    for (;;) {
      std::uint64_t t = now_ns();
      bool idle = true;
      while (send_time.size() < total && static_cast<double>(next) * period <= double(t)) {
        auto seq = static_cast<std::uint32_t>(send_time.size());
        send_time.push_back(t);
        ++res.requests;
        send(seq, handshake ? probe::Kind::Syn : probe::Kind::Echo);
        ++next;
        idle = false;
      }
      auto bufs = cfg.ipsec_on() ? lookaside_rx(port, c_in, cfg.ring_capacity, c_ctr) : port.rx_burst(cfg.ring_capacity);
      if (!bufs.empty()) {
        std::uint64_t rt = now_ns();
        for (const auto& b : bufs) {
          auto h = probe::read(b.payload());
          port.free(b);
          if (h.seq >= send_time.size() || answered[h.seq]) continue;
          answered[h.seq] = 1;
          ++res.answered;
          res.rtts.push_back(rt - send_time[h.seq]);
          if (h.kind == probe::Kind::SynAck) send(h.seq, probe::Kind::AckData);
        }
        idle = false;
      }
      if (send_time.size() == total && (res.answered == res.requests || t > end_drain)) break;
      if (t > end_drain) break;
      if (idle) std::this_thread::yield();
    }
  };

  std::vector<std::thread> threads;
  threads.emplace_back(nic_loop, std::ref(tb.client_nic()));
  threads.emplace_back(nic_loop, std::ref(tb.server_nic()));
  threads.emplace_back(server_loop);
  if (worker) threads.emplace_back(crypto_loop);
  std::thread client(client_loop);
  client.join();
  stop_server.store(true, std::memory_order_release);
  stop_all.store(true, std::memory_order_release);
  for (auto& t : threads) t.join();

  res.exits = exits.load();
  res.server_delivered = delivered.load();
  res.tx_rejected += server_rejected.load();
  res.server_app_aes_ops = app_aes.load();
  res.link_lost = tb.client_to_server().lost() + tb.server_to_client().lost();
  res.stats = compute_stats(res.rtts, res.requests - res.answered);
  res.client_counters = tb.client().counter_map();
  res.server_counters = tb.server().counter_map();
  res.client_crypto = c_ctr;
  res.server_crypto = worker ? worker->counter() : s_ctr;
  return res;
}

}  // namespace detail

/// Echo (or handshake) workload through the full stack.
inline EchoResult run_echo(const BenchConfig& cfg) {
  cfg.validate();
  if (cfg.workload == Workload::UdpLoad) throw Error(Errc::ConfigInvalid, "udp_load is a load workload");
  if (cfg.time == TimeMode::WallClock) return detail::run_echo_wall(cfg);
  detail::EchoSim sim(cfg);
  return sim.run();
}

// ---------------------------------------------------------------------------
// Connection ramp and per-second load model

struct RampSchedule {
  std::uint64_t max_connections = 0;
  std::uint64_t step = 1;  // connections added per second
  double hold_s = 30;

  static RampSchedule for_max(std::uint64_t max_conn, double hold_s = 30) {
    RampSchedule r;
    r.max_connections = max_conn;
    r.step = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::floor(0.05 * double(max_conn))));
    r.hold_s = hold_s;
    return r;
  }

  /// Connections active during second `s` while ramping to `target`.
  std::uint64_t active_at(std::uint64_t s, std::uint64_t target) const { return std::min(target, step * (s + 1)); }
};

struct LoadSecond {
  std::uint64_t second = 0;
  std::uint64_t connections = 0;
  double offered_pps = 0;
  double delivered_pps = 0;
};

struct ThroughputReport {
  std::uint64_t requested_connections = 0;
  std::uint64_t max_connections = 0;
  std::uint64_t connections = 0;
  bool clamped = false;
  double capacity_pps = 0;
  double effective_capacity_pps = 0;
  std::optional<std::uint64_t> loss_onset_connections;
  std::optional<std::uint64_t> loss_onset_second;
  double achieved_bps = 0;
  double offered_bps = 0;
  double lost_packets = 0;
  std::vector<LoadSecond> series;
};

/// Per-second fluid model of the connection ramp. Each connection offers
/// `rate` requests per second; the server completes at most the effective
/// capacity (1 / (1/C + k) with per-packet crypto cost k). A handshake round
/// costs three packets and carries one payload.
inline ThroughputReport run_load(const BenchConfig& cfg) {
  cfg.validate();
  if (cfg.time == TimeMode::WallClock) throw Error(Errc::ConfigInvalid, "load workloads run in simulated time only");
  ThroughputReport r;
  r.requested_connections = cfg.connections;
  r.max_connections = max_connections(cfg.bandwidth_bps, cfg.payload, cfg.rate);
  r.connections = std::min<std::uint64_t>(cfg.connections, r.max_connections);
  r.clamped = r.connections < cfg.connections;
  if (r.connections == 0) throw Error(Errc::ConfigInvalid, "formula allows zero connections");
  r.capacity_pps = cfg.capacity_pps > 0 ? cfg.capacity_pps : cfg.bandwidth_bps / (double(cfg.payload) * 8.0);
  double k_s = cfg.ipsec_on() ? cfg.crypto_cost_ns * 1e-9 : 0.0;
  r.effective_capacity_pps = 1.0 / (1.0 / r.capacity_pps + k_s);
  const double pkts_per_round = cfg.workload == Workload::TcpLikeLoad ? 3.0 : 1.0;
  const double rounds_capacity = r.effective_capacity_pps / pkts_per_round;

  RampSchedule ramp = RampSchedule::for_max(r.max_connections, cfg.hold_s);
  const auto hold = static_cast<std::uint64_t>(std::ceil(cfg.hold_s));
  double hold_delivered = 0, hold_offered = 0;
  std::uint64_t hold_seconds = 0;
  bool holding = false;
  for (std::uint64_t s = 0;; ++s) {
    std::uint64_t conns = ramp.active_at(s, r.connections);
    double offered = double(conns) * cfg.rate;
    double delivered = std::min(offered, rounds_capacity);
    r.series.push_back({s, conns, offered, delivered});
    r.lost_packets += (offered - delivered) * pkts_per_round;
    if (offered > rounds_capacity && !r.loss_onset_second) {
      r.loss_onset_second = s;
      r.loss_onset_connections = conns;
    }
    if (conns == r.connections) holding = true;
    if (holding) {
      hold_delivered += delivered;
      hold_offered += offered;
      if (++hold_seconds == hold) break;
    }
  }
  r.achieved_bps = hold_delivered / double(hold_seconds) * cfg.payload * 8.0;
  r.offered_bps = hold_offered / double(hold_seconds) * cfg.payload * 8.0;
  return r;
}

// ---------------------------------------------------------------------------
// App-cost saturation sweep

struct SweepPoint {
  std::uint64_t app_cost_ns = 0;
  bool sustainable = false;
  std::uint64_t first_rtt = 0;
  std::uint64_t last_rtt = 0;
};

struct SweepResult {
  std::uint64_t c_max_ns = 0;
  std::vector<SweepPoint> points;
};

/// Raises the per-packet application cost until the server can no longer keep
/// up with one connection at `cfg.rate`. A point is sustainable when nothing
/// is dropped and the last RTT exceeds the first by at most half the packet
/// interval.
inline SweepResult saturation_sweep(BenchConfig cfg, std::uint64_t step_ns = 2000, std::uint64_t packets = 500) {
  cfg.connections = 1;
  cfg.time = TimeMode::Deterministic;
  cfg.duration_s = double(packets) / cfg.rate;
  const auto interval = static_cast<std::uint64_t>(std::llround(1e9 / cfg.rate));
  SweepResult out;
  bool failed = false;
  for (std::uint64_t c = 0; c <= interval + 2 * step_ns; c += step_ns) {
    cfg.app_cost_ns = double(c);
    EchoResult r = run_echo(cfg);
    SweepPoint p;
    p.app_cost_ns = c;
    if (!r.rtts.empty()) {
      p.first_rtt = r.rtts.front();
      p.last_rtt = r.rtts.back();
    }
    p.sustainable = r.stats.drops == 0 && r.answered == r.requests && p.last_rtt <= p.first_rtt + interval / 2;
    out.points.push_back(p);
    if (p.sustainable && !failed) out.c_max_ns = c;
    if (!p.sustainable) failed = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report rendering beyond plain latency stats

inline nlohmann::ordered_json to_json(const ThroughputReport& r) {
  nlohmann::ordered_json j;
  j["requested_connections"] = r.requested_connections;
  j["max_connections"] = r.max_connections;
  j["connections"] = r.connections;
  j["clamped"] = r.clamped;
  j["capacity_pps"] = r.capacity_pps;
  j["effective_capacity_pps"] = r.effective_capacity_pps;
  j["loss_onset_connections"] =
      r.loss_onset_connections ? nlohmann::ordered_json(*r.loss_onset_connections) : nlohmann::ordered_json();
  j["loss_onset_second"] = r.loss_onset_second ? nlohmann::ordered_json(*r.loss_onset_second) : nlohmann::ordered_json();
  j["achieved_bps"] = r.achieved_bps;
  j["offered_bps"] = r.offered_bps;
  j["lost_packets"] = r.lost_packets;
  return j;
}

inline std::string format_load_report(const ThroughputReport& r, ReportFormat f) {
  auto j = to_json(r);
  std::ostringstream o;
  switch (f) {
    case ReportFormat::Json: o << j.dump(2) << '\n'; break;
    case ReportFormat::Csv: {
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) o << (first ? "" : ",") << it.key(), first = false;
      o << '\n';
      first = true;
      for (auto it = j.begin(); it != j.end(); ++it) o << (first ? "" : ",") << (it->is_null() ? "" : it->dump()), first = false;
      o << '\n';
      break;
    }
    case ReportFormat::Text:
      for (auto it = j.begin(); it != j.end(); ++it) {
        std::string k = it.key();
        o << k << std::string(k.size() < 24 ? 24 - k.size() : 1, ' ') << (it->is_null() ? "none" : it->dump()) << '\n';
      }
      break;
  }
  return o.str();
}

}  // namespace cvmio
