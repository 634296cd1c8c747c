#pragma once

// TX/RX descriptor rings placed in shared memory.
//
// On-arena layout (little endian):
//
//   ring header (32 bytes)
//     +0  u32 doorbell      VM producer index, release-stored after each post
//   slot i at header + i * 32
//
//   TX slot                         RX slot
//     +0  handle   address  (W)       +0  handle packet_address (W)
//     +8  u32  cmd_type_len (W)       +8  handle header_address (W)
//     +12 u32  olinfo_status(W)       +16 u16 packet_info   (R once)
//     +16 u8   status       (R)       +18 u16 status_error  (R until ready)
//     +17..31 padding                 +20 u32 rss           (R once)
//                                     +24 u16 vlan_tag      (R once)
//                                     +26 u16 length        (R once)
//                                     +28..31 padding
//
//   handle encoding (8 bytes): u16 region, u16 len, u32 offset
//
// TX status: 0 means in flight; any non-zero value means the device freed the
// slot and carries a completion stamp in 1..255 that orders completions.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "cvmio/mem.hpp"

namespace cvmio {

namespace layout {
inline constexpr std::uint64_t kHeaderSize = 32;
inline constexpr std::uint64_t kSlotSize = 32;
inline constexpr std::uint64_t kDoorbell = 0;

inline constexpr std::uint64_t kTxAddress = 0;
inline constexpr std::uint64_t kTxCmdTypeLen = 8;
inline constexpr std::uint64_t kTxOlinfoStatus = 12;
inline constexpr std::uint64_t kTxStatus = 16;

inline constexpr std::uint64_t kRxPacketAddress = 0;
inline constexpr std::uint64_t kRxHeaderAddress = 8;
inline constexpr std::uint64_t kRxPacketInfo = 16;
inline constexpr std::uint64_t kRxStatusError = 18;
inline constexpr std::uint64_t kRxRss = 20;
inline constexpr std::uint64_t kRxVlanTag = 24;
inline constexpr std::uint64_t kRxLength = 26;
inline constexpr std::uint64_t kRxWritebackOffset = 16;
inline constexpr std::uint64_t kRxWritebackSize = 16;

inline constexpr std::uint32_t kTxCmdEop = 1u << 24;
inline constexpr std::uint32_t kTxCmdIfcs = 1u << 25;
inline constexpr std::uint32_t kTxCmdRs = 1u << 27;
inline constexpr std::uint32_t kTxLenMask = 0xFFFF;
inline constexpr int kTxPaylenShift = 14;

inline constexpr std::uint8_t kTxStatusInFlight = 0;

inline constexpr std::uint16_t kRxStatusDd = 0x0001;
inline constexpr std::uint16_t kRxStatusEop = 0x0002;
inline constexpr std::uint16_t kRxErrorMask = 0xFF00;

constexpr std::uint64_t ring_bytes(std::uint32_t capacity) { return kHeaderSize + kSlotSize * capacity; }
}  // namespace layout

using HandleBytes = std::array<std::uint8_t, 8>;

inline HandleBytes encode_handle(const Handle& h) {
  if (h.region > 0xFFFF || h.len > 0xFFFF || h.offset > 0xFFFFFFFFull)
    throw Error(Errc::OutOfBounds, "handle not encodable in a descriptor " + to_string(h));
  HandleBytes b{};
  auto r = static_cast<std::uint16_t>(h.region);
  auto l = static_cast<std::uint16_t>(h.len);
  auto o = static_cast<std::uint32_t>(h.offset);
  std::memcpy(b.data(), &r, 2);
  std::memcpy(b.data() + 2, &l, 2);
  std::memcpy(b.data() + 4, &o, 4);
  return b;
}

inline Handle decode_handle(const HandleBytes& b) {
  std::uint16_t r, l;
  std::uint32_t o;
  std::memcpy(&r, b.data(), 2);
  std::memcpy(&l, b.data() + 2, 2);
  std::memcpy(&o, b.data() + 4, 4);
  return Handle{r, o, l};
}

enum class Direction : std::uint8_t { Tx, Rx };

struct TxDescriptor {
  Handle address;
  std::uint32_t cmd_type_len = 0;
  std::uint32_t olinfo_status = 0;
};

/// Private copy of one harvested RX writeback. `buffer` is the VM's own record
/// of what it posted, never the address found in shared memory.
struct RxWriteback {
  std::uint32_t slot = 0;
  Handle buffer;
  std::uint16_t packet_info = 0;
  std::uint32_t rss = 0;
  std::uint16_t status_error = 0;
  std::uint16_t vlan_tag = 0;
  std::uint16_t length = 0;           // clamped to buffer.len
  std::uint16_t reported_length = 0;  // as written by the device
  bool metadata_suspect = false;

  bool error() const { return (status_error & layout::kRxErrorMask) != 0; }
};

/// Location of a ring as seen by the device: nothing but shared memory.
struct RingEndpoint {
  Handle backing;
  std::uint32_t capacity = 0;
};

namespace detail {

inline bool is_pow2(std::uint32_t v) { return v >= 2 && (v & (v - 1)) == 0; }

class RingBase {
 public:
  std::uint32_t capacity() const { return capacity_; }
  std::uint32_t occupied() const { return head_ - tail_; }
  bool full() const { return occupied() == capacity_; }
  bool empty() const { return head_ == tail_; }
  std::uint32_t head() const { return head_; }
  std::uint32_t tail() const { return tail_; }
  const Handle& backing() const { return backing_; }
  RingEndpoint endpoint() const { return {backing_, capacity_}; }

  Handle slot_handle(std::uint32_t slot) const {
    return backing_.sub(layout::kHeaderSize + layout::kSlotSize * slot, layout::kSlotSize);
  }
  Handle field(std::uint32_t slot, std::uint64_t off, std::uint64_t len) const { return slot_handle(slot).sub(off, len); }

 protected:
  RingBase(Memory& mem, RegionId arena, std::uint32_t capacity) : mem_(&mem), capacity_(capacity), mask_(capacity - 1) {
    if (!is_pow2(capacity)) throw Error(Errc::BadCapacity, std::to_string(capacity));
    if (mem.arena(arena).kind() != RegionKind::Shared || !mem.regions().is_registered(arena))
      throw Error(Errc::NotShared, "ring arena " + std::to_string(arena));
    backing_ = mem.arena(arena).allocate(layout::ring_bytes(capacity), 64);
    mem.fill(backing_, Side::Vm, 0);
  }

  void ring_doorbell() {
    mem_->store_release<std::uint32_t>(backing_.sub(layout::kDoorbell, 4), Side::Vm, head_);
  }

  Memory* mem_;
  Handle backing_;
  std::uint32_t capacity_;
  std::uint32_t mask_;
  std::uint32_t head_ = 0;  // next post, free running
  std::uint32_t tail_ = 0;  // oldest unreclaimed, free running
};

}  // namespace detail

/// VM side of a transmit ring.
class TxRing : public detail::RingBase {
 public:
  TxRing(Memory& mem, RegionId shared_arena, std::uint32_t capacity)
      : RingBase(mem, shared_arena, capacity), in_flight_(capacity, false), reported_(capacity, false) {}

  /// Writes address, cmd_type_len and olinfo_status once; they are never read
  /// back by the VM.
  std::uint32_t post(const TxDescriptor& d) {
    if (full()) throw Error(Errc::RingFull);
    if (!mem_->is_device_visible(d.address)) throw Error(Errc::AddressNotShared, to_string(d.address));
    std::uint32_t slot = head_ & mask_;
    auto enc = encode_handle(d.address);
    mem_->store<std::uint8_t>(field(slot, layout::kTxStatus, 1), Side::Vm, layout::kTxStatusInFlight);
    mem_->write(field(slot, layout::kTxAddress, 8), Side::Vm, enc);
    mem_->store<std::uint32_t>(field(slot, layout::kTxCmdTypeLen, 4), Side::Vm, d.cmd_type_len);
    mem_->store<std::uint32_t>(field(slot, layout::kTxOlinfoStatus, 4), Side::Vm, d.olinfo_status);
    in_flight_[slot] = true;
    reported_[slot] = false;
    ++head_;
    ring_doorbell();
    return slot;
  }

  /// Returns slots the device marked free since the last poll, in completion
  /// order. A slot's status is not read again once it has been reported.
  std::vector<std::uint32_t> poll() {
    struct Done {
      std::uint32_t slot;
      std::uint32_t key;
      std::uint8_t stamp;
    };
    std::vector<Done> done;
    for (std::uint32_t i = tail_; i != head_; ++i) {
      std::uint32_t slot = i & mask_;
      if (!in_flight_[slot] || reported_[slot]) continue;
      auto st = mem_->load_acquire<std::uint8_t>(field(slot, layout::kTxStatus, 1), Side::Vm);
      if (st == layout::kTxStatusInFlight) continue;
      std::uint32_t pos = st - 1u;
      done.push_back({slot, (pos + 255u - next_stamp_pos_) % 255u, st});
      reported_[slot] = true;
    }
    std::stable_sort(done.begin(), done.end(), [](const Done& a, const Done& b) { return a.key < b.key; });
    std::vector<std::uint32_t> out;
    out.reserve(done.size());
    for (const auto& d : done) out.push_back(d.slot);
    if (!done.empty()) next_stamp_pos_ = (static_cast<std::uint32_t>(done.back().stamp - 1u) + 1u) % 255u;
    while (tail_ != head_ && reported_[tail_ & mask_]) {
      in_flight_[tail_ & mask_] = false;
      reported_[tail_ & mask_] = false;
      ++tail_;
    }
    return out;
  }

  bool in_flight(std::uint32_t slot) const { return in_flight_.at(slot) && !reported_.at(slot); }

 private:
  std::vector<bool> in_flight_;
  std::vector<bool> reported_;
  std::uint32_t next_stamp_pos_ = 0;
};

/// VM side of a receive ring.
class RxRing : public detail::RingBase {
 public:
  RxRing(Memory& mem, RegionId shared_arena, std::uint32_t capacity)
      : RingBase(mem, shared_arena, capacity), posted_(capacity), harvests_(capacity, 0) {}

  /// header_address is posted equal to packet_address by the pool layer; no
  /// header split is modeled.
  std::uint32_t post_buffer(const Handle& packet, const Handle& header) {
    if (full()) throw Error(Errc::RingFull);
    if (!mem_->is_device_visible(packet)) throw Error(Errc::AddressNotShared, to_string(packet));
    if (!mem_->is_device_visible(header)) throw Error(Errc::AddressNotShared, to_string(header));
    std::uint32_t slot = head_ & mask_;
    mem_->write(field(slot, layout::kRxPacketAddress, 8), Side::Vm, encode_handle(packet));
    mem_->write(field(slot, layout::kRxHeaderAddress, 8), Side::Vm, encode_handle(header));
    mem_->fill(field(slot, layout::kRxWritebackOffset, layout::kRxWritebackSize), Side::Vm, 0);
    posted_[slot] = packet;
    ++head_;
    ring_doorbell();
    return slot;
  }

  /// Reads each writeback field of a ready slot exactly once. status_error is
  /// polled until it shows ready and is not touched again for that use.
  std::vector<RxWriteback> harvest(std::size_t max) {
    std::vector<RxWriteback> out;
    while (out.size() < max && tail_ != head_) {
      std::uint32_t slot = tail_ & mask_;
      auto st = mem_->load_acquire<std::uint16_t>(field(slot, layout::kRxStatusError, 2), Side::Vm);
      if (!(st & layout::kRxStatusDd)) break;
      RxWriteback wb;
      wb.slot = slot;
      wb.buffer = posted_[slot];
      wb.status_error = st;
      wb.packet_info = mem_->load<std::uint16_t>(field(slot, layout::kRxPacketInfo, 2), Side::Vm);
      wb.rss = mem_->load<std::uint32_t>(field(slot, layout::kRxRss, 4), Side::Vm);
      wb.vlan_tag = mem_->load<std::uint16_t>(field(slot, layout::kRxVlanTag, 2), Side::Vm);
      wb.reported_length = mem_->load<std::uint16_t>(field(slot, layout::kRxLength, 2), Side::Vm);
      wb.length = wb.reported_length;
      if (wb.reported_length > wb.buffer.len) {
        wb.length = static_cast<std::uint16_t>(wb.buffer.len);
        wb.metadata_suspect = true;
      }
      ++harvests_[slot];
      ++tail_;
      out.push_back(wb);
    }
    return out;
  }

  /// Number of times each slot has been harvested; used by read-once checks.
  std::uint64_t harvest_count(std::uint32_t slot) const { return harvests_.at(slot); }
  const Handle& posted(std::uint32_t slot) const { return posted_.at(slot); }

 private:
  std::vector<Handle> posted_;
  std::vector<std::uint64_t> harvests_;
};

// ---------------------------------------------------------------------------
// Device side. The device only knows ring endpoints in shared memory and keeps
// its own consumer indices.

struct TxDescriptorView {
  std::uint32_t slot = 0;
  Handle address;
  std::uint32_t cmd_type_len = 0;
  std::uint32_t olinfo_status = 0;

  std::uint16_t length() const { return static_cast<std::uint16_t>(cmd_type_len & layout::kTxLenMask); }
};

struct RxSlotView {
  std::uint32_t slot = 0;
  Handle packet_address;
  Handle header_address;
};

struct RxWritebackFields {
  std::uint16_t packet_info = 0;
  std::uint32_t rss = 0;
  std::uint16_t status_error = layout::kRxStatusDd | layout::kRxStatusEop;
  std::uint16_t vlan_tag = 0;
  std::uint16_t length = 0;
};

namespace detail {
class DeviceQueueBase {
 public:
  DeviceQueueBase(Memory& mem, RingEndpoint ep) : mem_(&mem), ep_(ep), mask_(ep.capacity - 1) {
    if (!is_pow2(ep.capacity)) throw Error(Errc::BadCapacity);
  }
  const RingEndpoint& endpoint() const { return ep_; }
  std::uint32_t capacity() const { return ep_.capacity; }

  Handle slot_handle(std::uint32_t slot) const {
    return ep_.backing.sub(layout::kHeaderSize + layout::kSlotSize * (slot & mask_), layout::kSlotSize);
  }
  Handle field(std::uint32_t slot, std::uint64_t off, std::uint64_t len) const { return slot_handle(slot).sub(off, len); }

 protected:
  std::uint32_t doorbell() {
    return mem_->load_acquire<std::uint32_t>(ep_.backing.sub(layout::kDoorbell, 4), Side::Device);
  }

  Memory* mem_;
  RingEndpoint ep_;
  std::uint32_t mask_;
  std::uint32_t next_ = 0;
};
}  // namespace detail

class DeviceTxQueue : public detail::DeviceQueueBase {
 public:
  using DeviceQueueBase::DeviceQueueBase;

  /// Next posted descriptor, if any. Throws DeviceAccessDenied when the ring
  /// is not in device-visible memory.
  std::optional<TxDescriptorView> fetch() {
    if (next_ == doorbell()) return std::nullopt;
    std::uint32_t slot = next_ & mask_;
    HandleBytes enc;
    mem_->read(field(slot, layout::kTxAddress, 8), Side::Device, enc);
    TxDescriptorView v;
    v.slot = slot;
    v.address = decode_handle(enc);
    v.cmd_type_len = mem_->load<std::uint32_t>(field(slot, layout::kTxCmdTypeLen, 4), Side::Device);
    v.olinfo_status = mem_->load<std::uint32_t>(field(slot, layout::kTxOlinfoStatus, 4), Side::Device);
    ++next_;
    return v;
  }

  void complete(std::uint32_t slot) {
    mem_->store_release<std::uint8_t>(field(slot, layout::kTxStatus, 1), Side::Device, next_stamp());
  }

  /// Raw completion write with an arbitrary status value (adversary use).
  void write_status(std::uint32_t slot, std::uint8_t status) {
    mem_->store_release<std::uint8_t>(field(slot, layout::kTxStatus, 1), Side::Device, status);
  }

 private:
  std::uint8_t next_stamp() {
    stamp_ = static_cast<std::uint8_t>(stamp_ % 255 + 1);
    return stamp_;
  }
  std::uint8_t stamp_ = 0;
};

class DeviceRxQueue : public detail::DeviceQueueBase {
 public:
  using DeviceQueueBase::DeviceQueueBase;

  /// Next armed buffer without consuming it.
  std::optional<RxSlotView> peek() {
    if (next_ == doorbell()) return std::nullopt;
    std::uint32_t slot = next_ & mask_;
    HandleBytes p, h;
    mem_->read(field(slot, layout::kRxPacketAddress, 8), Side::Device, p);
    mem_->read(field(slot, layout::kRxHeaderAddress, 8), Side::Device, h);
    return RxSlotView{slot, decode_handle(p), decode_handle(h)};
  }

  /// Writes all writeback fields, status_error last, and consumes the slot.
  void writeback(std::uint32_t slot, const RxWritebackFields& f) {
    write_fields(slot, f);
    if ((next_ & mask_) == (slot & mask_)) ++next_;
  }

  /// Writeback without advancing the device cursor (adversary use).
  void write_fields(std::uint32_t slot, const RxWritebackFields& f) {
    mem_->store<std::uint16_t>(field(slot, layout::kRxPacketInfo, 2), Side::Device, f.packet_info);
    mem_->store<std::uint32_t>(field(slot, layout::kRxRss, 4), Side::Device, f.rss);
    mem_->store<std::uint16_t>(field(slot, layout::kRxVlanTag, 2), Side::Device, f.vlan_tag);
    mem_->store<std::uint16_t>(field(slot, layout::kRxLength, 2), Side::Device, f.length);
    mem_->store_release<std::uint16_t>(field(slot, layout::kRxStatusError, 2), Side::Device, f.status_error);
  }

  /// Index of the slot the device would fill next.
  std::uint32_t cursor() const { return next_; }
};

}  // namespace cvmio
