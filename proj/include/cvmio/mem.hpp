#pragma once

// Byte arenas modeling the private/shared split of a confidential VM.
//
// Nothing in the system holds a host pointer to packet memory. Every location
// is a Handle (region, offset, len) and every access names the side it comes
// from. Device-side accesses are only honored for Shared arenas that have been
// registered with the shared-region manager; this is how the hardware
// ownership check is modeled.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "cvmio/error.hpp"

namespace cvmio {

enum class RegionKind : std::uint8_t { Private, Shared };
enum class Side : std::uint8_t { Vm, Device };

constexpr const char* to_string(RegionKind k) { return k == RegionKind::Private ? "private" : "shared"; }
constexpr const char* to_string(Side s) { return s == Side::Vm ? "vm" : "device"; }

using RegionId = std::uint32_t;

struct Handle {
  RegionId region = 0;
  std::uint64_t offset = 0;
  std::uint64_t len = 0;

  constexpr std::uint64_t end() const { return offset + len; }

  /// Narrow to [off, off + n) relative to this handle.
  Handle sub(std::uint64_t off, std::uint64_t n) const {
    if (off > len || n > len - off) throw Error(Errc::OutOfBounds, "sub-handle exceeds parent");
    return Handle{region, offset + off, n};
  }

  friend bool operator==(const Handle&, const Handle&) = default;
};

inline std::string to_string(const Handle& h) {
  return "(" + std::to_string(h.region) + ", " + std::to_string(h.offset) + ", " + std::to_string(h.len) + ")";
}

/// Per-region access totals, kept only when instrumentation is on.
struct AccessTally {
  std::uint64_t vm_reads = 0;
  std::uint64_t vm_writes = 0;
  std::uint64_t device_reads = 0;
  std::uint64_t device_writes = 0;
  std::uint64_t device_denied = 0;
};

class Arena {
 public:
  Arena(RegionId id, RegionKind kind, std::size_t size, bool instrument)
      : id_(id), kind_(kind), size_(size), data_(static_cast<std::uint8_t*>(std::calloc(size, 1))) {
    if (!data_) throw std::bad_alloc();
    if (instrument) {
      for (auto& side : counters_)
        for (auto& c : side) c.assign(size, 0);
    }
  }

  RegionId id() const { return id_; }
  RegionKind kind() const { return kind_; }
  std::size_t size() const { return size_; }
  Handle whole() const { return Handle{id_, 0, size_}; }
  bool instrumented() const { return !counters_[0][0].empty(); }

  std::span<const std::uint8_t> bytes() const { return {data_.get(), size_}; }

  /// Bump allocation used by the pool and ring layers at init time.
  Handle allocate(std::size_t n, std::size_t align = 64) {
    std::size_t start = (used_ + align - 1) / align * align;
    if (n == 0 || start > size_ || n > size_ - start)
      throw Error(Errc::ArenaTooSmall, "region " + std::to_string(id_) + " needs " + std::to_string(n) +
                                           " bytes, " + std::to_string(size_ - std::min(start, size_)) + " left");
    used_ = start + n;
    return Handle{id_, start, n};
  }
  std::size_t used() const { return used_; }
  std::size_t remaining() const { return size_ - used_; }

  std::uint32_t reads(Side side, std::size_t off) const { return counter(side, 0, off); }
  std::uint32_t writes(Side side, std::size_t off) const { return counter(side, 1, off); }

  const AccessTally& tally() const { return tally_; }

 private:
  friend class Memory;

  struct FreeDeleter {
    void operator()(std::uint8_t* p) const { std::free(p); }
  };

  std::uint32_t counter(Side side, int op, std::size_t off) const {
    const auto& c = counters_[static_cast<int>(side)][op];
    return off < c.size() ? c[off] : 0;
  }

  void count(Side side, int op, std::uint64_t off, std::uint64_t len) {
    auto& c = counters_[static_cast<int>(side)][op];
    if (c.empty()) return;
    for (std::uint64_t i = off; i < off + len; ++i) ++c[i];
  }

  std::uint8_t* raw() { return data_.get(); }

  RegionId id_;
  RegionKind kind_;
  std::size_t size_;
  std::unique_ptr<std::uint8_t[], FreeDeleter> data_;
  std::size_t used_ = 0;
  // [side][read=0/write=1] per-byte tallies.
  std::vector<std::uint32_t> counters_[2][2];
  AccessTally tally_;
  std::atomic<bool> registered_{false};
  bool ever_registered_ = false;
  bool quarantined_ = false;
};

/// Lifecycle of the set of regions exposed to the device.
class SharedRegionManager {
 public:
  enum class State { Init, Active, TornDown };

  State state() const { return state_; }
  bool is_registered(RegionId id) const {
    return std::find(registered_.begin(), registered_.end(), id) != registered_.end();
  }
  const std::vector<RegionId>& registered() const { return registered_; }

 private:
  friend class Memory;
  State state_ = State::Init;
  std::vector<RegionId> registered_;
};

/// Owner of all arenas. Arenas are created during setup, before any worker
/// threads start; lookups afterwards are lock-free.
class Memory {
 public:
  explicit Memory(bool instrument = false) : instrument_(instrument) {}
  Memory(const Memory&) = delete;
  Memory& operator=(const Memory&) = delete;

  bool instrumented() const { return instrument_; }

  RegionId create_arena(RegionKind kind, std::size_t size) {
    if (size == 0) throw Error(Errc::ZeroSize);
    std::lock_guard lock(mu_);
    auto id = static_cast<RegionId>(arenas_.size());
    arenas_.push_back(std::make_unique<Arena>(id, kind, size, instrument_));
    return id;
  }

  std::size_t arena_count() const { return arenas_.size(); }

  Arena& arena(RegionId id) {
    if (id >= arenas_.size()) throw Error(Errc::UnknownRegion, std::to_string(id));
    return *arenas_[id];
  }
  const Arena& arena(RegionId id) const {
    if (id >= arenas_.size()) throw Error(Errc::UnknownRegion, std::to_string(id));
    return *arenas_[id];
  }

  const SharedRegionManager& regions() const { return mgr_; }

  void register_shared(RegionId id) {
    std::lock_guard lock(mu_);
    if (mgr_.state_ == SharedRegionManager::State::TornDown) throw Error(Errc::AlreadyTornDown);
    Arena& a = arena(id);
    if (a.kind() != RegionKind::Shared) throw Error(Errc::NotShared, "region " + std::to_string(id));
    if (!mgr_.is_registered(id)) mgr_.registered_.push_back(id);
    a.registered_.store(true, std::memory_order_release);
    a.ever_registered_ = true;
    a.quarantined_ = false;
    mgr_.state_ = SharedRegionManager::State::Active;
  }

  /// Incremental teardown of one region (e.g. when its port is closed).
  void release_shared(RegionId id) {
    std::lock_guard lock(mu_);
    if (mgr_.state_ == SharedRegionManager::State::TornDown) throw Error(Errc::AlreadyTornDown);
    Arena& a = arena(id);
    a.registered_.store(false, std::memory_order_release);
    std::memset(a.raw(), 0, a.size());
    a.quarantined_ = false;
    std::erase(mgr_.registered_, id);
  }

  /// Shutdown: zero every region that was ever exposed, then unregister all.
  void zero_and_release() {
    std::lock_guard lock(mu_);
    if (mgr_.state_ == SharedRegionManager::State::TornDown) throw Error(Errc::AlreadyTornDown);
    if (mgr_.state_ != SharedRegionManager::State::Active) throw Error(Errc::AlreadyTornDown, "manager never activated");
    for (auto& a : arenas_) {
      if (!a->ever_registered_) continue;
      a->registered_.store(false, std::memory_order_release);
      std::memset(a->raw(), 0, a->size());
      a->quarantined_ = false;
    }
    mgr_.registered_.clear();
    mgr_.state_ = SharedRegionManager::State::TornDown;
  }

  /// A region whose owner died without teardown stays unusable until it is
  /// zeroed by the manager.
  void quarantine(RegionId id) {
    std::lock_guard lock(mu_);
    arena(id).quarantined_ = true;
  }
  bool is_quarantined(RegionId id) const { return arena(id).quarantined_; }
  bool can_reuse(RegionId id) const {
    const Arena& a = arena(id);
    return !a.quarantined_ && !a.registered_.load(std::memory_order_acquire);
  }

  bool contains(RegionId arena_id, const Handle& h, RegionKind required) const {
    if (h.region != arena_id || arena_id >= arenas_.size()) return false;
    const Arena& a = *arenas_[arena_id];
    return a.kind() == required && h.offset <= a.size() && h.len <= a.size() - h.offset;
  }

  /// True iff the handle lies wholly inside a registered Shared arena.
  bool is_device_visible(const Handle& h) const {
    if (h.region >= arenas_.size()) return false;
    const Arena& a = *arenas_[h.region];
    return contains(h.region, h, RegionKind::Shared) && a.registered_.load(std::memory_order_acquire);
  }

  void read(const Handle& h, Side side, std::span<std::uint8_t> out) {
    if (out.size() != h.len) throw Error(Errc::OutOfBounds, "read buffer size mismatch");
    Arena& a = check(h, side, false);
    std::memcpy(out.data(), a.raw() + h.offset, h.len);
  }

  std::vector<std::uint8_t> read_bytes(const Handle& h, Side side) {
    std::vector<std::uint8_t> out(h.len);
    read(h, side, out);
    return out;
  }

  void write(const Handle& h, Side side, std::span<const std::uint8_t> in) {
    if (in.size() != h.len) throw Error(Errc::OutOfBounds, "write size mismatch");
    Arena& a = check(h, side, true);
    std::memmove(a.raw() + h.offset, in.data(), h.len);
  }

  void fill(const Handle& h, Side side, std::uint8_t value) {
    Arena& a = check(h, side, true);
    std::memset(a.raw() + h.offset, value, h.len);
  }

  /// One bulk copy between two regions, accounted as a read of src and a
  /// write of dst on the same side.
  void copy(const Handle& src, const Handle& dst, Side side) {
    if (src.len != dst.len) throw Error(Errc::OutOfBounds, "copy length mismatch");
    Arena& s = check(src, side, false);
    Arena& d = check(dst, side, true);
    std::memmove(d.raw() + dst.offset, s.raw() + src.offset, src.len);
  }

  template <class T>
  T load(const Handle& at, Side side) {
    static_assert(std::is_trivially_copyable_v<T>);
    Arena& a = check(sized<T>(at), side, false);
    T v;
    std::memcpy(&v, a.raw() + at.offset, sizeof(T));
    return v;
  }

  template <class T>
  void store(const Handle& at, Side side, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    Arena& a = check(sized<T>(at), side, true);
    std::memcpy(a.raw() + at.offset, &v, sizeof(T));
  }

  /// Ordered accesses for fields that hand ownership across sides (ring
  /// doorbells and descriptor status).
  template <class T>
  T load_acquire(const Handle& at, Side side) {
    static_assert(std::is_integral_v<T>);
    Arena& a = check(sized<T>(at), side, false);
    return std::atomic_ref<T>(*aligned<T>(a, at)).load(std::memory_order_acquire);
  }

  template <class T>
  void store_release(const Handle& at, Side side, T v) {
    static_assert(std::is_integral_v<T>);
    Arena& a = check(sized<T>(at), side, true);
    std::atomic_ref<T>(*aligned<T>(a, at)).store(v, std::memory_order_release);
  }

  /// Direct view for application code. Only private memory can be viewed this
  /// way; shared memory is never handed out as a span.
  std::span<std::uint8_t> private_span(const Handle& h) {
    if (!contains(h.region, h, RegionKind::Private)) throw Error(Errc::OutOfBounds, "not a private handle " + to_string(h));
    return {arena(h.region).raw() + h.offset, h.len};
  }

  bool all_zero(RegionId id) const {
    auto b = arena(id).bytes();
    return std::all_of(b.begin(), b.end(), [](std::uint8_t x) { return x == 0; });
  }

  /// Exhaustive scan of every Shared arena for a byte pattern.
  bool shared_contains(std::span<const std::uint8_t> needle) const {
    if (needle.empty()) return false;
    for (const auto& a : arenas_) {
      if (a->kind() != RegionKind::Shared) continue;
      auto b = a->bytes();
      if (std::search(b.begin(), b.end(), needle.begin(), needle.end()) != b.end()) return true;
    }
    return false;
  }

  std::uint64_t device_denied_total() const { return device_denied_.load(std::memory_order_relaxed); }

 private:
  template <class T>
  static Handle sized(const Handle& at) {
    if (at.len != sizeof(T)) throw Error(Errc::OutOfBounds, "field width mismatch");
    return at;
  }

  template <class T>
  static T* aligned(Arena& a, const Handle& at) {
    auto* p = a.raw() + at.offset;
    if (reinterpret_cast<std::uintptr_t>(p) % alignof(T) != 0) throw Error(Errc::OutOfBounds, "misaligned field");
    return reinterpret_cast<T*>(p);
  }

  Arena& check(const Handle& h, Side side, bool is_write) {
    if (h.region >= arenas_.size()) throw Error(Errc::UnknownRegion, to_string(h));
    Arena& a = *arenas_[h.region];
    if (side == Side::Device &&
        (a.kind() != RegionKind::Shared || !a.registered_.load(std::memory_order_acquire))) {
      device_denied_.fetch_add(1, std::memory_order_relaxed);
      if (instrument_) ++a.tally_.device_denied;
      throw Error(Errc::DeviceAccessDenied, to_string(h));
    }
    if (h.offset > a.size() || h.len > a.size() - h.offset) throw Error(Errc::OutOfBounds, to_string(h));
    if (instrument_) {
      a.count(side, is_write ? 1 : 0, h.offset, h.len);
      auto& t = a.tally_;
      if (side == Side::Vm) ++(is_write ? t.vm_writes : t.vm_reads);
      else ++(is_write ? t.device_writes : t.device_reads);
    }
    return a;
  }

  bool instrument_;
  std::mutex mu_;
  std::vector<std::unique_ptr<Arena>> arenas_;
  SharedRegionManager mgr_;
  std::atomic<std::uint64_t> device_denied_{0};
};

}  // namespace cvmio
