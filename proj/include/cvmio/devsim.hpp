#pragma once

// Simulated NIC: an actor that only sees ring endpoints and shared arenas.
// Every memory operation it issues is tagged Side::Device, so any attempt to
// touch private memory is refused by Memory and recorded here as an event.

#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "cvmio/mem.hpp"
#include "cvmio/pools.hpp"
#include "cvmio/ring.hpp"
#include "cvmio/rng.hpp"
#include "cvmio/spsc_queue.hpp"

namespace cvmio {

struct LinkModel {
  std::uint64_t base_latency_ns = 1000;
  double per_byte_ns = 0.0;
  std::uint64_t jitter_ns = 0;  // uniform extra delay in [0, jitter_ns]
  std::uint64_t jitter_seed = 1;
  double loss_rate = 0.0;

  void validate() const {
    if (!(loss_rate >= 0.0 && loss_rate <= 1.0)) throw Error(Errc::ConfigInvalid, "loss_rate outside [0, 1]");
    if (!(per_byte_ns >= 0.0)) throw Error(Errc::ConfigInvalid, "per_byte_ns negative");
  }

  /// Same timing and loss behaviour; seeds may differ.
  bool same_shape(const LinkModel& o) const {
    return base_latency_ns == o.base_latency_ns && per_byte_ns == o.per_byte_ns && jitter_ns == o.jitter_ns &&
           loss_rate == o.loss_rate;
  }

  std::uint64_t wire_delay(std::size_t bytes) const {
    return base_latency_ns + static_cast<std::uint64_t>(per_byte_ns * static_cast<double>(bytes) + 0.5);
  }
};

struct Frame {
  std::vector<std::uint8_t> bytes;
  std::uint64_t sent_ns = 0;
  std::uint64_t due_ns = 0;
  std::uint64_t seq = 0;
};

/// One direction of the wire. The sending NIC calls send(), the receiving NIC
/// calls pop_due(); the two may run on different threads.
class Link {
 public:
  explicit Link(const LinkModel& m, std::size_t wire_capacity = 1 << 16)
      : model_(m), rng_(m.jitter_seed), wire_(wire_capacity) {
    m.validate();
  }

  const LinkModel& model() const { return model_; }

  /// Returns false when the frame is lost (or the wire is full). Loss and
  /// jitter are both drawn for every frame so the stream of draws does not
  /// depend on outcomes.
  bool send(std::vector<std::uint8_t> bytes, std::uint64_t now) {
    double u = rng_.uniform01();
    std::uint64_t jitter = rng_.uniform_to(model_.jitter_ns);
    std::uint64_t seq = sent_++;
    if (capture_) capture_log_.push_back(bytes);
    if (u < model_.loss_rate) {
      ++lost_;
      return false;
    }
    Frame f{std::move(bytes), now, 0, seq};
    f.due_ns = now + model_.wire_delay(f.bytes.size()) + jitter;
    if (!wire_.push(std::move(f))) {
      ++overflow_;
      return false;
    }
    return true;
  }

  /// Receiver side: earliest frame with due_ns <= now, if any.
  std::optional<Frame> pop_due(std::uint64_t now) {
    drain();
    if (pending_.empty() || pending_.top().due_ns > now) return std::nullopt;
    Frame f = pending_.top();
    pending_.pop();
    return f;
  }

  /// Receiver side: due time of the earliest frame in flight.
  std::optional<std::uint64_t> next_due() {
    drain();
    if (pending_.empty()) return std::nullopt;
    return pending_.top().due_ns;
  }

  /// Put a frame back after the receiver could not place it.
  void requeue(Frame f) { pending_.push(std::move(f)); }

  void set_capture(bool on) { capture_ = on; }
  const std::vector<std::vector<std::uint8_t>>& capture() const { return capture_log_; }

  std::uint64_t sent() const { return sent_; }
  std::uint64_t lost() const { return lost_; }
  std::uint64_t overflow() const { return overflow_; }

 private:
  struct Later {
    bool operator()(const Frame& a, const Frame& b) const {
      return a.due_ns != b.due_ns ? a.due_ns > b.due_ns : a.seq > b.seq;
    }
  };

  void drain() {
    while (auto f = wire_.pop()) pending_.push(std::move(*f));
  }

  LinkModel model_;
  Xoshiro256 rng_;
  SpscQueue<Frame> wire_;
  std::priority_queue<Frame, std::vector<Frame>, Later> pending_;
  bool capture_ = false;
  std::vector<std::vector<std::uint8_t>> capture_log_;
  std::uint64_t sent_ = 0;
  std::uint64_t lost_ = 0;
  std::uint64_t overflow_ = 0;
};

enum class DeviceEventKind : std::uint8_t {
  TxSent,
  TxLost,
  RxDelivered,
  RxNoBuffer,
  RxTooLong,
  AccessDenied,
  OutOfBounds,
};

constexpr const char* to_string(DeviceEventKind k) {
  switch (k) {
    case DeviceEventKind::TxSent: return "tx_sent";
    case DeviceEventKind::TxLost: return "tx_lost";
    case DeviceEventKind::RxDelivered: return "rx_delivered";
    case DeviceEventKind::RxNoBuffer: return "rx_no_buffer";
    case DeviceEventKind::RxTooLong: return "rx_too_long";
    case DeviceEventKind::AccessDenied: return "access_denied";
    case DeviceEventKind::OutOfBounds: return "out_of_bounds";
  }
  return "?";
}

struct DeviceEvent {
  DeviceEventKind kind;
  std::uint64_t time_ns = 0;
  std::uint32_t slot = 0;
  std::uint32_t bytes = 0;

  friend bool operator==(const DeviceEvent&, const DeviceEvent&) = default;
};

struct NicStats {
  std::uint64_t tx_frames = 0;
  std::uint64_t tx_lost = 0;
  std::uint64_t rx_frames = 0;
  std::uint64_t rx_missed = 0;
  std::uint64_t violations = 0;
};

class SimNic {
 public:
  SimNic(Memory& mem, const DeviceBinding& binding, std::string name = "nic")
      : mem_(&mem), tx_(mem, binding.tx), rx_(mem, binding.rx), name_(std::move(name)) {}

  void connect(Link* out, Link* in) {
    out_ = out;
    in_ = in;
  }

  /// Keep an event trace (deterministic runs and tests).
  void set_trace(bool on) { trace_ = on; }
  const std::vector<DeviceEvent>& events() const { return events_; }
  const NicStats& stats() const { return stats_; }
  const std::string& name() const { return name_; }

  /// Transmit everything posted, then deliver every inbound frame due at
  /// `now`. Returns the number of frames moved.
  std::size_t step(std::uint64_t now) { return step_tx(now) + step_rx(now); }

  std::size_t step_tx(std::uint64_t now) {
    std::size_t n = 0;
    while (auto d = tx_.fetch()) {
      std::vector<std::uint8_t> bytes;
      try {
        bytes = mem_->read_bytes(d->address.sub(0, d->length()), Side::Device);
      } catch (const Error& e) {
        violation(e.code(), now, d->slot);
      }
      tx_.complete(d->slot);
      ++n;
      if (bytes.empty()) continue;
      std::uint32_t len = static_cast<std::uint32_t>(bytes.size());
      if (out_ && out_->send(std::move(bytes), now)) {
        ++stats_.tx_frames;
        record(DeviceEventKind::TxSent, now, d->slot, len);
      } else {
        ++stats_.tx_lost;
        record(DeviceEventKind::TxLost, now, d->slot, len);
      }
    }
    return n;
  }

  std::size_t step_rx(std::uint64_t now) {
    if (!in_) return 0;
    std::size_t n = 0;
    while (auto f = in_->pop_due(now)) {
      deliver(*f, now);
      ++n;
    }
    return n;
  }

  /// Earliest inbound frame still in flight.
  std::optional<std::uint64_t> next_due() { return in_ ? in_->next_due() : std::nullopt; }

  // Raw device primitives, used by the adversary.
  DeviceTxQueue& tx_queue() { return tx_; }
  DeviceRxQueue& rx_queue() { return rx_; }
  Memory& memory() { return *mem_; }

  /// Attempt a device access and report it as an event instead of throwing.
  bool try_access(const Handle& h, bool write, std::uint64_t now) {
    try {
      if (write) mem_->fill(h, Side::Device, 0xA5);
      else (void)mem_->read_bytes(h, Side::Device);
      return true;
    } catch (const Error& e) {
      violation(e.code(), now, 0);
      return false;
    }
  }

 private:
  void deliver(const Frame& f, std::uint64_t now) {
    auto slot = rx_.peek();
    if (!slot) {
      ++stats_.rx_missed;
      record(DeviceEventKind::RxNoBuffer, now, 0, static_cast<std::uint32_t>(f.bytes.size()));
      return;
    }
    if (f.bytes.size() > slot->packet_address.len) {
      ++stats_.rx_missed;
      record(DeviceEventKind::RxTooLong, now, slot->slot, static_cast<std::uint32_t>(f.bytes.size()));
      return;
    }
    try {
      mem_->write(slot->packet_address.sub(0, f.bytes.size()), Side::Device, f.bytes);
    } catch (const Error& e) {
      violation(e.code(), now, slot->slot);
      return;
    }
    RxWritebackFields wb;
    wb.length = static_cast<std::uint16_t>(f.bytes.size());
    wb.rss = flow_hash(f.bytes);
    rx_.writeback(slot->slot, wb);
    ++stats_.rx_frames;
    record(DeviceEventKind::RxDelivered, now, slot->slot, wb.length);
  }

  // FNV-1a over the leading addressing bytes.
  static std::uint32_t flow_hash(const std::vector<std::uint8_t>& b) {
    std::uint32_t h = 2166136261u;
    for (std::size_t i = 0; i < b.size() && i < 8; ++i) h = (h ^ b[i]) * 16777619u;
    return h;
  }

  void violation(Errc code, std::uint64_t now, std::uint32_t slot) {
    ++stats_.violations;
    record(code == Errc::DeviceAccessDenied ? DeviceEventKind::AccessDenied : DeviceEventKind::OutOfBounds, now, slot, 0);
  }

  void record(DeviceEventKind k, std::uint64_t now, std::uint32_t slot, std::uint32_t bytes) {
    if (trace_) events_.push_back({k, now, slot, bytes});
  }

  Memory* mem_;
  DeviceTxQueue tx_;
  DeviceRxQueue rx_;
  std::string name_;
  Link* out_ = nullptr;
  Link* in_ = nullptr;
  bool trace_ = false;
  std::vector<DeviceEvent> events_;
  NicStats stats_;
};

/// Two NICs wired back to back through a pair of links.
struct NicPair {
  std::unique_ptr<Link> a_to_b;
  std::unique_ptr<Link> b_to_a;
  std::unique_ptr<SimNic> a;
  std::unique_ptr<SimNic> b;
};

/// Both directions must share base latency, per-byte cost, jitter bound and
/// loss rate; only the seed may differ.
inline NicPair loopback_pair(Memory& mem, const PortContext& a, const PortContext& b, const LinkModel& ab,
                             const LinkModel& ba) {
  if (!ab.same_shape(ba)) throw Error(Errc::SymmetryRequired, "link models differ between directions");
  NicPair p;
  p.a_to_b = std::make_unique<Link>(ab);
  p.b_to_a = std::make_unique<Link>(ba);
  p.a = std::make_unique<SimNic>(mem, eal::bind_device(a), "nic-a");
  p.b = std::make_unique<SimNic>(mem, eal::bind_device(b), "nic-b");
  p.a->connect(p.a_to_b.get(), p.b_to_a.get());
  p.b->connect(p.b_to_a.get(), p.a_to_b.get());
  return p;
}

inline NicPair loopback_pair(Memory& mem, const PortContext& a, const PortContext& b, const LinkModel& m) {
  LinkModel back = m;
  back.jitter_seed = m.jitter_seed ^ 0x9e3779b97f4a7c15ull;
  return loopback_pair(mem, a, b, m, back);
}

}  // namespace cvmio
