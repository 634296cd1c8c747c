#pragma once

// Packet buffer pools and the copy-before-processing burst API.
//
// Three pools are created per port:
//   shared     whole objects (meta + data room) in shared memory; the device
//              DMAs into these data rooms, the VM never allocates from it.
//   temporary  metadata in private memory, data handle pre-bound 1:1 to a
//              shared-pool data room. Used only inside rx_burst/tx_burst.
//   shadow     wholly private; the only buffers the application ever sees.
//
// rx_burst/tx_burst perform exactly one bulk copy per packet per direction
// between a temporary buffer's shared data room and a shadow buffer.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvmio/mem.hpp"
#include "cvmio/ring.hpp"

namespace cvmio {

inline constexpr std::uint32_t kMetaOverhead = 128;
inline constexpr std::uint32_t kDefaultMbufSize = 2176;
inline constexpr std::uint32_t kAppPrivateSize = 64;

/// Offsets inside the 128-byte metadata block that precedes every buffer.
namespace meta {
inline constexpr std::uint64_t kMsgType = 0;     // u16
inline constexpr std::uint64_t kFlags = 2;       // u16
inline constexpr std::uint64_t kPktLen = 4;      // u32
inline constexpr std::uint64_t kDataRegion = 8;  // u32
inline constexpr std::uint64_t kDataOffset = 12; // u32
inline constexpr std::uint64_t kDataRoom = 16;   // u32
inline constexpr std::uint64_t kNext = 20;       // u32, kNoNext when unchained
inline constexpr std::uint64_t kRss = 24;        // u32
inline constexpr std::uint64_t kVlan = 28;       // u16
inline constexpr std::uint64_t kPacketInfo = 30; // u16
inline constexpr std::uint64_t kAppPrivate = 64; // kAppPrivateSize bytes

inline constexpr std::uint32_t kNoNext = 0xFFFFFFFFu;
inline constexpr std::uint16_t kFlagMetadataSuspect = 0x0001;
}  // namespace meta

struct PoolConfig {
  std::uint32_t mbuf_count = 512;
  std::uint32_t mbuf_size = kDefaultMbufSize;
  bool shared_equals_shadow = true;
  std::uint32_t shadow_count = 0;  // only used when !shared_equals_shadow

  std::uint32_t data_room() const { return mbuf_size - kMetaOverhead; }
  std::uint32_t effective_shadow_count() const { return shared_equals_shadow ? mbuf_count : shadow_count; }

  void validate() const {
    if (mbuf_count == 0) throw Error(Errc::ConfigInvalid, "mbuf_count must be > 0");
    if (mbuf_size < kMetaOverhead + 64)
      throw Error(Errc::ArenaTooSmall, "mbuf_size " + std::to_string(mbuf_size) + " below metadata overhead + 64");
    if (!shared_equals_shadow && shadow_count == 0) throw Error(Errc::ConfigInvalid, "shadow_count must be > 0");
  }
};

struct PoolFootprint {
  std::uint64_t shared = 0;
  std::uint64_t temporary = 0;
  std::uint64_t shadow = 0;
  std::uint64_t total = 0;
};

/// Memory cost of the three pools. The temporary pool owns only metadata; its
/// data rooms are the shared pool's.
inline PoolFootprint pool_memory_footprint(const PoolConfig& cfg) {
  PoolFootprint f;
  f.shared = std::uint64_t{cfg.mbuf_count} * cfg.mbuf_size;
  f.temporary = std::uint64_t{cfg.mbuf_count} * kMetaOverhead;
  f.shadow = std::uint64_t{cfg.effective_shadow_count()} * cfg.mbuf_size;
  f.total = f.shared + f.temporary + f.shadow;
  return f;
}

enum class PoolKind : std::uint8_t { Shared, Temporary, Shadow };

constexpr const char* to_string(PoolKind k) {
  switch (k) {
    case PoolKind::Shared: return "shared";
    case PoolKind::Temporary: return "temporary";
    case PoolKind::Shadow: return "shadow";
  }
  return "?";
}

class PacketPool;

/// Reference to one pool object. Cheap to copy; the object itself lives in an
/// arena and is owned by its pool.
class PacketBuffer {
 public:
  PacketBuffer() = default;
  PacketBuffer(PacketPool* pool, std::uint32_t index) : pool_(pool), index_(index) {}

  bool valid() const { return pool_ != nullptr; }
  PacketPool* pool() const { return pool_; }
  std::uint32_t index() const { return index_; }
  PoolKind kind() const;

  Handle meta_handle() const;
  Handle data_handle() const;
  std::uint32_t data_room() const;

  std::uint32_t pkt_len() const { return get<std::uint32_t>(meta::kPktLen); }
  void set_pkt_len(std::uint32_t len) const;
  std::uint16_t msg_type() const { return get<std::uint16_t>(meta::kMsgType); }
  void set_msg_type(std::uint16_t t) const { put(meta::kMsgType, t); }
  std::uint16_t flags() const { return get<std::uint16_t>(meta::kFlags); }
  void set_flags(std::uint16_t f) const { put(meta::kFlags, f); }
  bool metadata_suspect() const { return flags() & meta::kFlagMetadataSuspect; }
  std::uint32_t rss() const { return get<std::uint32_t>(meta::kRss); }
  std::uint16_t vlan_tag() const { return get<std::uint16_t>(meta::kVlan); }
  std::uint16_t packet_info() const { return get<std::uint16_t>(meta::kPacketInfo); }

  /// Chain link to the next segment of the same packet.
  std::optional<PacketBuffer> next() const {
    auto n = get<std::uint32_t>(meta::kNext);
    if (n == meta::kNoNext) return std::nullopt;
    return PacketBuffer(pool_, n);
  }
  void set_next(std::optional<PacketBuffer> n) const;

  /// Sum of pkt_len over the chain.
  std::uint32_t chain_len() const {
    std::uint32_t total = 0;
    for (std::optional<PacketBuffer> b = *this; b; b = b->next()) total += b->pkt_len();
    return total;
  }

  /// Whole data room / first pkt_len bytes / application private area.
  /// Private buffers only.
  std::span<std::uint8_t> data() const;
  std::span<std::uint8_t> payload() const { return data().first(pkt_len()); }
  std::span<std::uint8_t> app_private() const;

  friend bool operator==(const PacketBuffer& a, const PacketBuffer& b) {
    return a.pool_ == b.pool_ && a.index_ == b.index_;
  }

 private:
  friend class PacketPool;
  friend class PortContext;

  template <class T>
  T get(std::uint64_t off) const;
  template <class T>
  void put(std::uint64_t off, T v) const;

  PacketPool* pool_ = nullptr;
  std::uint32_t index_ = 0;
};

class PacketPool {
 public:
  /// Shadow and shared pools: objects of mbuf_size bytes carved from `arena`.
  PacketPool(Memory& mem, PoolKind kind, RegionId arena, std::uint32_t count, std::uint32_t mbuf_size)
      : mem_(&mem), kind_(kind), count_(count), mbuf_size_(mbuf_size), allocated_(count, false) {
    if (kind == PoolKind::Temporary) throw Error(Errc::ConfigInvalid, "temporary pool needs a data source");
    if (kind == PoolKind::Shadow && mem.arena(arena).kind() != RegionKind::Private)
      throw Error(Errc::ConfigInvalid, "shadow pool must live in private memory");
    if (kind == PoolKind::Shared && mem.arena(arena).kind() != RegionKind::Shared)
      throw Error(Errc::NotShared, "shared pool arena");
    base_ = mem.arena(arena).allocate(std::uint64_t{count} * mbuf_size, 64);
    init_free_list();
  }

  /// Temporary pool: metadata in private `arena`, data rooms pre-bound to the
  /// shared pool's objects one to one.
  PacketPool(Memory& mem, RegionId arena, const PacketPool& shared)
      : mem_(&mem),
        kind_(PoolKind::Temporary),
        count_(shared.count()),
        mbuf_size_(kMetaOverhead),
        allocated_(shared.count(), false),
        data_source_(&shared) {
    if (mem.arena(arena).kind() != RegionKind::Private)
      throw Error(Errc::ConfigInvalid, "temporary pool metadata must live in private memory");
    base_ = mem.arena(arena).allocate(std::uint64_t{count_} * kMetaOverhead, 64);
    for (std::uint32_t i = 0; i < count_; ++i) {
      Handle d = shared.data_handle(i);
      Handle m = meta_handle(i);
      mem.store<std::uint32_t>(m.sub(meta::kDataRegion, 4), Side::Vm, d.region);
      mem.store<std::uint32_t>(m.sub(meta::kDataOffset, 4), Side::Vm, static_cast<std::uint32_t>(d.offset));
      mem.store<std::uint32_t>(m.sub(meta::kDataRoom, 4), Side::Vm, static_cast<std::uint32_t>(d.len));
      mem.store<std::uint32_t>(m.sub(meta::kNext, 4), Side::Vm, meta::kNoNext);
    }
    init_free_list();
  }

  PacketPool(const PacketPool&) = delete;
  PacketPool& operator=(const PacketPool&) = delete;

  PoolKind kind() const { return kind_; }
  std::uint32_t count() const { return count_; }
  std::uint32_t available() const { return static_cast<std::uint32_t>(free_.size()); }
  std::uint32_t data_room() const {
    return kind_ == PoolKind::Temporary ? data_source_->data_room() : mbuf_size_ - kMetaOverhead;
  }
  std::uint64_t footprint_bytes() const { return base_.len; }
  Memory& memory() const { return *mem_; }

  /// Serialize alloc/free when the pool is shared between two workers.
  void set_thread_safe(bool on) { thread_safe_ = on; }

  Handle meta_handle(std::uint32_t i) const {
    return base_.sub(std::uint64_t{i} * mbuf_size_, kMetaOverhead);
  }

  Handle data_handle(std::uint32_t i) const {
    if (kind_ == PoolKind::Temporary) {
      Handle m = meta_handle(i);
      auto region = mem_->load<std::uint32_t>(m.sub(meta::kDataRegion, 4), Side::Vm);
      auto off = mem_->load<std::uint32_t>(m.sub(meta::kDataOffset, 4), Side::Vm);
      auto room = mem_->load<std::uint32_t>(m.sub(meta::kDataRoom, 4), Side::Vm);
      return Handle{region, off, room};
    }
    return base_.sub(std::uint64_t{i} * mbuf_size_ + kMetaOverhead, mbuf_size_ - kMetaOverhead);
  }

  std::optional<PacketBuffer> try_alloc() {
    std::unique_lock<std::mutex> lock(mu_, std::defer_lock);
    if (thread_safe_) lock.lock();
    if (free_.empty()) return std::nullopt;
    std::uint32_t i = free_.back();
    free_.pop_back();
    allocated_[i] = true;
    lock_release(lock);
    PacketBuffer b(this, i);
    reset_meta(b);
    return b;
  }

  PacketBuffer alloc() {
    auto b = try_alloc();
    if (!b) throw Error(Errc::PoolExhausted, to_string(kind_));
    return *b;
  }

  /// LIFO: the next alloc returns the most recently freed object.
  void free(const PacketBuffer& b) {
    if (!owns(b)) throw Error(Errc::ForeignBuffer, std::string("buffer does not belong to ") + to_string(kind_) + " pool");
    if (kind_ == PoolKind::Shadow) mem_->fill(b.meta_handle().sub(meta::kAppPrivate, kAppPrivateSize), Side::Vm, 0);
    std::unique_lock<std::mutex> lock(mu_, std::defer_lock);
    if (thread_safe_) lock.lock();
    allocated_[b.index()] = false;
    free_.push_back(b.index());
  }

  /// True iff b is a currently allocated object of this pool.
  bool owns(const PacketBuffer& b) const {
    return b.pool() == this && b.index() < count_ && allocated_[b.index()];
  }

 private:
  void init_free_list() {
    free_.reserve(count_);
    for (std::uint32_t i = count_; i-- > 0;) free_.push_back(i);
  }

  static void lock_release(std::unique_lock<std::mutex>& l) {
    if (l.owns_lock()) l.unlock();
  }

  void reset_meta(const PacketBuffer& b) {
    Handle m = b.meta_handle();
    mem_->store<std::uint16_t>(m.sub(meta::kMsgType, 2), Side::Vm, 0);
    mem_->store<std::uint16_t>(m.sub(meta::kFlags, 2), Side::Vm, 0);
    mem_->store<std::uint32_t>(m.sub(meta::kPktLen, 4), Side::Vm, 0);
    mem_->store<std::uint32_t>(m.sub(meta::kNext, 4), Side::Vm, meta::kNoNext);
    mem_->store<std::uint32_t>(m.sub(meta::kRss, 4), Side::Vm, 0);
    mem_->store<std::uint16_t>(m.sub(meta::kVlan, 2), Side::Vm, 0);
    mem_->store<std::uint16_t>(m.sub(meta::kPacketInfo, 2), Side::Vm, 0);
    if (kind_ != PoolKind::Temporary) {
      Handle d = data_handle(b.index());
      mem_->store<std::uint32_t>(m.sub(meta::kDataRegion, 4), Side::Vm, d.region);
      mem_->store<std::uint32_t>(m.sub(meta::kDataOffset, 4), Side::Vm, static_cast<std::uint32_t>(d.offset));
      mem_->store<std::uint32_t>(m.sub(meta::kDataRoom, 4), Side::Vm, static_cast<std::uint32_t>(d.len));
    }
  }

  Memory* mem_;
  PoolKind kind_;
  std::uint32_t count_;
  std::uint32_t mbuf_size_;
  Handle base_;
  std::vector<std::uint32_t> free_;
  std::vector<bool> allocated_;
  const PacketPool* data_source_ = nullptr;
  bool thread_safe_ = false;
  std::mutex mu_;
};

// PacketBuffer members that need the pool definition.

inline PoolKind PacketBuffer::kind() const { return pool_->kind(); }
inline Handle PacketBuffer::meta_handle() const { return pool_->meta_handle(index_); }
inline Handle PacketBuffer::data_handle() const { return pool_->data_handle(index_); }
inline std::uint32_t PacketBuffer::data_room() const { return pool_->data_room(); }

template <class T>
T PacketBuffer::get(std::uint64_t off) const {
  return pool_->memory().load<T>(meta_handle().sub(off, sizeof(T)), Side::Vm);
}
template <class T>
void PacketBuffer::put(std::uint64_t off, T v) const {
  pool_->memory().store<T>(meta_handle().sub(off, sizeof(T)), Side::Vm, v);
}

inline void PacketBuffer::set_pkt_len(std::uint32_t len) const {
  if (len > data_room()) throw Error(Errc::OversizePacket, std::to_string(len) + " > data room " + std::to_string(data_room()));
  put(meta::kPktLen, len);
}

inline void PacketBuffer::set_next(std::optional<PacketBuffer> n) const {
  if (n && n->pool() != pool_) throw Error(Errc::ForeignBuffer, "chained buffers must share a pool");
  put(meta::kNext, n ? n->index() : meta::kNoNext);
}

inline std::span<std::uint8_t> PacketBuffer::data() const { return pool_->memory().private_span(data_handle()); }

inline std::span<std::uint8_t> PacketBuffer::app_private() const {
  return pool_->memory().private_span(meta_handle().sub(meta::kAppPrivate, kAppPrivateSize));
}

struct PoolSet {
  std::unique_ptr<PacketPool> shared;
  std::unique_ptr<PacketPool> temporary;
  std::unique_ptr<PacketPool> shadow;
};

/// Creates the three pools. The shared arena must already be registered.
inline PoolSet init_pools(Memory& mem, const PoolConfig& cfg, RegionId private_arena, RegionId shared_arena) {
  cfg.validate();
  if (!mem.regions().is_registered(shared_arena)) throw Error(Errc::NotShared, "shared arena not registered");
  PoolSet s;
  s.shared = std::make_unique<PacketPool>(mem, PoolKind::Shared, shared_arena, cfg.mbuf_count, cfg.mbuf_size);
  s.temporary = std::make_unique<PacketPool>(mem, private_arena, *s.shared);
  s.shadow = std::make_unique<PacketPool>(mem, PoolKind::Shadow, private_arena, cfg.effective_shadow_count(), cfg.mbuf_size);
  return s;
}

struct PortConfig {
  PoolConfig pools;
  std::uint32_t ring_capacity = 256;
  bool drop_suspect = true;
};

struct PortCounters {
  std::uint64_t rx_packets = 0;
  std::uint64_t tx_packets = 0;
  std::uint64_t copies_rx = 0;
  std::uint64_t copies_tx = 0;
  std::uint64_t bytes_copied = 0;
  std::uint64_t drops = 0;
  std::uint64_t metadata_suspect = 0;
  std::uint64_t rx_errors = 0;
  std::uint64_t tx_reclaimed = 0;
};

/// What the device is told about a port: ring locations in shared memory.
struct DeviceBinding {
  RingEndpoint tx;
  RingEndpoint rx;
};

class PortContext;
namespace eal {
DeviceBinding bind_device(const PortContext& port);
const TxRing& tx_ring(const PortContext& port);
const RxRing& rx_ring(const PortContext& port);
}  // namespace eal

/// One port: a TX/RX ring pair plus its three pools. Owned by one worker at a
/// time; rx_burst and tx_burst are not reentrant.
class PortContext {
 public:
  PortContext(Memory& mem, RegionId private_arena, RegionId shared_arena, const PortConfig& cfg)
      : mem_(&mem), private_arena_(private_arena), shared_arena_(shared_arena), cfg_(cfg) {
    cfg.pools.validate();
    if (!detail::is_pow2(cfg.ring_capacity)) throw Error(Errc::BadCapacity, std::to_string(cfg.ring_capacity));
    if (cfg.pools.mbuf_count <= cfg.ring_capacity)
      throw Error(Errc::ConfigInvalid, "mbuf_count must exceed ring capacity (RX ring keeps one buffer per slot)");
    if (cfg.pools.data_room() > 0xFFFF) throw Error(Errc::ConfigInvalid, "data room exceeds descriptor length field");
    pools_ = init_pools(mem, cfg.pools, private_arena, shared_arena);
    tx_ = std::make_unique<TxRing>(mem, shared_arena, cfg.ring_capacity);
    rx_ = std::make_unique<RxRing>(mem, shared_arena, cfg.ring_capacity);
    tx_temp_.resize(cfg.ring_capacity);
    rx_temp_.resize(cfg.ring_capacity);
    for (std::uint32_t i = 0; i < cfg.ring_capacity; ++i) {
      PacketBuffer t = pools_.temporary->alloc();
      Handle d = t.data_handle();
      std::uint32_t slot = rx_->post_buffer(d, d);
      rx_temp_[slot] = t;
    }
  }

  PortContext(const PortContext&) = delete;
  PortContext& operator=(const PortContext&) = delete;

  /// A port dropped without close() leaves its shared region quarantined until
  /// the shared-region manager zeroes it.
  ~PortContext() {
    if (!closed_ && mem_->regions().state() != SharedRegionManager::State::TornDown) mem_->quarantine(shared_arena_);
  }

  /// Harvest up to `max` packets; each is copied once into a fresh shadow
  /// buffer before it is returned.
  std::vector<PacketBuffer> rx_burst(std::size_t max) {
    std::vector<PacketBuffer> out;
    for (const RxWriteback& wb : rx_->harvest(max)) {
      PacketBuffer temp = rx_temp_[wb.slot];
      if (wb.error()) {
        ++counters_.rx_errors;
        ++counters_.drops;
        repost(wb.slot, temp);
        continue;
      }
      if (wb.metadata_suspect) {
        ++counters_.metadata_suspect;
        if (cfg_.drop_suspect) {
          ++counters_.drops;
          repost(wb.slot, temp);
          continue;
        }
      }
      auto sb = pools_.shadow->try_alloc();
      if (!sb) {
        ++counters_.drops;
        repost(wb.slot, temp);
        continue;
      }
      mem_->copy(wb.buffer.sub(0, wb.length), sb->data_handle().sub(0, wb.length), Side::Vm);
      temp.put(meta::kPktLen, std::uint32_t{wb.length});
      sb->put(meta::kPktLen, std::uint32_t{wb.length});
      sb->put(meta::kRss, wb.rss);
      sb->put(meta::kVlan, wb.vlan_tag);
      sb->put(meta::kPacketInfo, wb.packet_info);
      if (wb.metadata_suspect) sb->put(meta::kFlags, meta::kFlagMetadataSuspect);
      ++counters_.copies_rx;
      ++counters_.rx_packets;
      counters_.bytes_copied += wb.length;
      repost(wb.slot, temp);
      out.push_back(*sb);
    }
    return out;
  }

  /// Copies each shadow buffer (flattening chains) into a temporary buffer
  /// and posts it. Returns the accepted prefix length; accepted buffers are
  /// freed, the rest stay with the caller.
  std::size_t tx_burst(std::span<const PacketBuffer> bufs) {
    for (const auto& b : bufs) {
      for (std::optional<PacketBuffer> s = b; s; s = s->next())
        if (!pools_.shadow->owns(*s)) throw Error(Errc::ForeignBuffer, "tx_burst accepts only this port's shadow buffers");
      if (b.chain_len() > pools_.temporary->data_room())
        throw Error(Errc::OversizePacket, std::to_string(b.chain_len()) + " bytes");
    }
    reclaim_tx();
    std::size_t accepted = 0;
    for (const auto& b : bufs) {
      if (tx_->full()) break;
      auto t = pools_.temporary->try_alloc();
      if (!t) break;
      Handle dst = t->data_handle();
      std::uint32_t total = 0;
      for (std::optional<PacketBuffer> s = b; s; s = s->next()) {
        std::uint32_t n = s->pkt_len();
        if (n) mem_->copy(s->data_handle().sub(0, n), dst.sub(total, n), Side::Vm);
        total += n;
      }
      t->put(meta::kPktLen, total);
      TxDescriptor d;
      d.address = dst.sub(0, total);
      d.cmd_type_len = total | layout::kTxCmdEop | layout::kTxCmdIfcs | layout::kTxCmdRs;
      d.olinfo_status = total << layout::kTxPaylenShift;
      std::uint32_t slot = tx_->post(d);
      tx_temp_[slot] = *t;
      free(b);
      ++counters_.copies_tx;
      ++counters_.tx_packets;
      counters_.bytes_copied += total;
      ++accepted;
    }
    return accepted;
  }

  /// Return temporary buffers of completed transmissions to their pool.
  std::size_t reclaim_tx() {
    auto done = tx_->poll();
    for (std::uint32_t slot : done) {
      pools_.temporary->free(tx_temp_[slot]);
      ++counters_.tx_reclaimed;
    }
    return done.size();
  }

  PacketBuffer alloc() { return pools_.shadow->alloc(); }
  std::optional<PacketBuffer> try_alloc() { return pools_.shadow->try_alloc(); }

  /// Frees a whole chain.
  void free(const PacketBuffer& b) {
    std::optional<PacketBuffer> s = b;
    while (s) {
      auto n = s->next();
      pools_.shadow->free(*s);
      s = n;
    }
  }

  std::uint32_t data_room() const { return cfg_.pools.data_room(); }
  const PortConfig& config() const { return cfg_; }
  const PortCounters& counters() const { return counters_; }

  std::map<std::string, std::uint64_t> counter_map() const {
    return {
        {"bytes_copied", counters_.bytes_copied},
        {"copies_rx", counters_.copies_rx},
        {"copies_tx", counters_.copies_tx},
        {"drops", counters_.drops},
        {"metadata_suspect", counters_.metadata_suspect},
        {"rx_errors", counters_.rx_errors},
        {"rx_packets", counters_.rx_packets},
        {"tx_packets", counters_.tx_packets},
        {"tx_reclaimed", counters_.tx_reclaimed},
    };
  }

  Memory& memory() const { return *mem_; }
  PacketPool& shadow_pool() const { return *pools_.shadow; }
  RegionId private_arena() const { return private_arena_; }

  /// Exclusive claim used by the inline crypto worker.
  void claim_crypto() {
    if (crypto_attached_) throw Error(Errc::AlreadyAttached);
    crypto_attached_ = true;
  }
  void release_crypto() { crypto_attached_ = false; }
  bool crypto_attached() const { return crypto_attached_; }

  /// Orderly shutdown of this port: its shared region is zeroed and
  /// unregistered right away.
  void close() {
    if (closed_) return;
    closed_ = true;
    if (mem_->regions().state() != SharedRegionManager::State::TornDown) mem_->release_shared(shared_arena_);
  }
  bool closed() const { return closed_; }

  /// Arena bytes a port with this config needs.
  static std::uint64_t shared_bytes_needed(const PortConfig& c) {
    return std::uint64_t{c.pools.mbuf_count} * c.pools.mbuf_size + 2 * (layout::ring_bytes(c.ring_capacity) + 64) + 64;
  }
  static std::uint64_t private_bytes_needed(const PortConfig& c) {
    return std::uint64_t{c.pools.effective_shadow_count()} * c.pools.mbuf_size +
           std::uint64_t{c.pools.mbuf_count} * kMetaOverhead + 128;
  }

 private:
  friend DeviceBinding eal::bind_device(const PortContext&);
  friend const TxRing& eal::tx_ring(const PortContext&);
  friend const RxRing& eal::rx_ring(const PortContext&);

  void repost(std::uint32_t slot, PacketBuffer temp) {
    Handle d = temp.data_handle();
    std::uint32_t s = rx_->post_buffer(d, d);
    if (s != slot) rx_temp_[s] = temp;
  }

  Memory* mem_;
  RegionId private_arena_;
  RegionId shared_arena_;
  PortConfig cfg_;
  PoolSet pools_;
  std::unique_ptr<TxRing> tx_;
  std::unique_ptr<RxRing> rx_;
  std::vector<PacketBuffer> tx_temp_;
  std::vector<PacketBuffer> rx_temp_;
  PortCounters counters_;
  bool closed_ = false;
  bool crypto_attached_ = false;
};

namespace eal {
/// Ring locations handed to the device at port setup. Not part of the
/// application-facing surface.
inline DeviceBinding bind_device(const PortContext& port) { return {port.tx_->endpoint(), port.rx_->endpoint()}; }
inline const TxRing& tx_ring(const PortContext& port) { return *port.tx_; }
inline const RxRing& rx_ring(const PortContext& port) { return *port.rx_; }
}  // namespace eal

}  // namespace cvmio
