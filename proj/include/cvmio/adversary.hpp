#pragma once

// Malicious-device harness. A plan is a list of actions; each action is played
// out around one probe packet sent from the client VM to the server VM, and
// the outcome is classified. After the plan, safety invariants are checked
// over the whole run.
//
// Plan files are line oriented, '#' starts a comment:
//
//   ipsec on|off
//   tamper_shared pre|post <offset> <hex bytes>
//   forge_writeback next|<slot> [length=N] [rss=N] [vlan=N] [packet_info=N] [status=N]
//   forge_address client|server <offset> <len>
//   replay_descriptor <slot>
//   drop_packet <n>
//   corrupt_ciphertext <offset>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvmio/ipsec.hpp"
#include "cvmio/rng.hpp"
#include "cvmio/testbed.hpp"

namespace cvmio {

enum class ActionKind : std::uint8_t {
  TamperShared,
  ForgeWriteback,
  ForgeAddress,
  ReplayDescriptor,
  DropPacket,
  CorruptCiphertext,
};

constexpr const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::TamperShared: return "tamper_shared";
    case ActionKind::ForgeWriteback: return "forge_writeback";
    case ActionKind::ForgeAddress: return "forge_address";
    case ActionKind::ReplayDescriptor: return "replay_descriptor";
    case ActionKind::DropPacket: return "drop_packet";
    case ActionKind::CorruptCiphertext: return "corrupt_ciphertext";
  }
  return "?";
}

struct AdversaryAction {
  ActionKind kind = ActionKind::DropPacket;
  bool post_copy = false;                 // tamper_shared
  std::uint32_t offset = 0;               // tamper_shared, forge_address, corrupt_ciphertext
  std::vector<std::uint8_t> bytes;        // tamper_shared
  std::optional<std::uint32_t> slot;      // forge_writeback (none: next), replay_descriptor
  RxWritebackFields fields;               // forge_writeback
  bool target_server = true;              // forge_address
  std::uint32_t length = 1;               // forge_address
  std::uint32_t count = 1;                // drop_packet

  std::string str() const {
    std::ostringstream o;
    o << to_string(kind);
    switch (kind) {
      case ActionKind::TamperShared: {
        o << (post_copy ? " post " : " pre ") << offset << ' ';
        static const char* hex = "0123456789abcdef";
        for (auto b : bytes) o << hex[b >> 4] << hex[b & 15];
        break;
      }
      case ActionKind::ForgeWriteback:
        o << ' ' << (slot ? std::to_string(*slot) : "next") << " length=" << fields.length << " rss=" << fields.rss
          << " vlan=" << fields.vlan_tag << " packet_info=" << fields.packet_info << " status=" << fields.status_error;
        break;
      case ActionKind::ForgeAddress: o << (target_server ? " server " : " client ") << offset << ' ' << length; break;
      case ActionKind::ReplayDescriptor: o << ' ' << slot.value_or(0); break;
      case ActionKind::DropPacket: o << ' ' << count; break;
      case ActionKind::CorruptCiphertext: o << ' ' << offset; break;
    }
    return o.str();
  }
};

struct AdversaryPlan {
  bool ipsec = false;
  std::vector<AdversaryAction> actions;

  std::string str() const {
    std::string s = std::string("ipsec ") + (ipsec ? "on" : "off") + "\n";
    for (const auto& a : actions) s += a.str() + "\n";
    return s;
  }

  static AdversaryPlan parse(const std::string& text) {
    AdversaryPlan p;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      std::istringstream ls(line);
      std::vector<std::string> tok;
      for (std::string t; ls >> t;) tok.push_back(t);
      if (tok.empty()) continue;
      auto fail = [&](const std::string& why) -> void {
        throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": " + why);
      };
      auto num = [&](const std::string& s) -> std::uint64_t {
        try {
          std::size_t used = 0;
          unsigned long long v = std::stoull(s, &used, 0);
          if (used != s.size() || s[0] == '-') throw std::invalid_argument(s);
          return v;
        } catch (const std::exception&) {
          fail("bad number '" + s + "'");
        }
        return 0;
      };
      auto need = [&](std::size_t n) {
        if (tok.size() != n) fail(tok[0] + " takes " + std::to_string(n - 1) + " argument(s)");
      };
      const std::string& op = tok[0];
      AdversaryAction a;
      if (op == "ipsec") {
        need(2);
        if (tok[1] != "on" && tok[1] != "off") fail("ipsec on|off");
        p.ipsec = tok[1] == "on";
        continue;
      } else if (op == "tamper_shared") {
        need(4);
        a.kind = ActionKind::TamperShared;
        if (tok[1] != "pre" && tok[1] != "post") fail("tamper_shared pre|post");
        a.post_copy = tok[1] == "post";
        a.offset = static_cast<std::uint32_t>(num(tok[2]));
        try {
          a.bytes = detail::parse_hex(tok[3]);
        } catch (const Error& e) {
          fail(e.what());
        }
        if (a.bytes.empty()) fail("tamper_shared needs at least one byte");
      } else if (op == "forge_writeback") {
        if (tok.size() < 2) fail("forge_writeback needs a slot");
        a.kind = ActionKind::ForgeWriteback;
        if (tok[1] != "next") a.slot = static_cast<std::uint32_t>(num(tok[1]));
        for (std::size_t i = 2; i < tok.size(); ++i) {
          auto eq = tok[i].find('=');
          if (eq == std::string::npos) fail("expected field=value");
          std::string k = tok[i].substr(0, eq);
          std::uint64_t v = num(tok[i].substr(eq + 1));
          if (k == "length" && v <= 0xFFFF) a.fields.length = std::uint16_t(v);
          else if (k == "rss" && v <= 0xFFFFFFFF) a.fields.rss = std::uint32_t(v);
          else if (k == "vlan" && v <= 0xFFFF) a.fields.vlan_tag = std::uint16_t(v);
          else if (k == "packet_info" && v <= 0xFFFF) a.fields.packet_info = std::uint16_t(v);
          else if (k == "status" && v <= 0xFFFF) a.fields.status_error = std::uint16_t(v);
          else fail("bad writeback field '" + tok[i] + "'");
        }
      } else if (op == "forge_address") {
        need(4);
        a.kind = ActionKind::ForgeAddress;
        if (tok[1] != "client" && tok[1] != "server") fail("forge_address client|server");
        a.target_server = tok[1] == "server";
        a.offset = static_cast<std::uint32_t>(num(tok[2]));
        a.length = static_cast<std::uint32_t>(num(tok[3]));
        if (a.length == 0) fail("forge_address length must be > 0");
      } else if (op == "replay_descriptor") {
        need(2);
        a.kind = ActionKind::ReplayDescriptor;
        a.slot = static_cast<std::uint32_t>(num(tok[1]));
      } else if (op == "drop_packet") {
        need(2);
        a.kind = ActionKind::DropPacket;
        a.count = static_cast<std::uint32_t>(num(tok[1]));
      } else if (op == "corrupt_ciphertext") {
        need(2);
        a.kind = ActionKind::CorruptCiphertext;
        a.offset = static_cast<std::uint32_t>(num(tok[1]));
      } else {
        fail("unknown action '" + op + "'");
      }
      p.actions.push_back(std::move(a));
    }
    return p;
  }

  static AdversaryPlan load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(Errc::IoError, "cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }
};

/// Random plan with 1..max_actions actions.
inline AdversaryPlan random_plan(std::uint64_t seed, std::size_t max_actions = 8) {
  Xoshiro256 rng(seed);
  AdversaryPlan p;
  p.ipsec = rng() & 1;
  std::size_t n = 1 + rng.uniform_to(max_actions - 1);
  static constexpr std::uint16_t kLengths[] = {0, 1, 16, 64, 2047, 2048, 2049, 4096, 65535};
  static constexpr std::uint16_t kReady = layout::kRxStatusDd | layout::kRxStatusEop;
  for (std::size_t i = 0; i < n; ++i) {
    AdversaryAction a;
    a.kind = static_cast<ActionKind>(rng.uniform_to(5));
    switch (a.kind) {
      case ActionKind::TamperShared:
        a.post_copy = rng() & 1;
        a.offset = static_cast<std::uint32_t>(rng.uniform_to(200));
        a.bytes.resize(1 + rng.uniform_to(15));
        for (auto& b : a.bytes) b = static_cast<std::uint8_t>(rng());
        break;
      case ActionKind::ForgeWriteback: {
        if (rng.uniform_to(4) == 0) a.slot = static_cast<std::uint32_t>(rng.uniform_to(15));
        a.fields.length = rng() & 1 ? kLengths[rng.uniform_to(8)] : static_cast<std::uint16_t>(rng());
        a.fields.rss = static_cast<std::uint32_t>(rng());
        a.fields.vlan_tag = static_cast<std::uint16_t>(rng());
        a.fields.packet_info = static_cast<std::uint16_t>(rng());
        switch (rng.uniform_to(3)) {
          case 0: a.fields.status_error = kReady; break;
          case 1: a.fields.status_error = kReady | static_cast<std::uint16_t>((1 + rng.uniform_to(254)) << 8); break;
          case 2: a.fields.status_error = 0; break;
          default: a.fields.status_error = static_cast<std::uint16_t>(rng()); break;
        }
        break;
      }
      case ActionKind::ForgeAddress:
        a.target_server = rng() & 1;
        a.offset = static_cast<std::uint32_t>(rng.uniform_to(1 << 20));
        a.length = static_cast<std::uint32_t>(1 + rng.uniform_to(255));
        break;
      case ActionKind::ReplayDescriptor: a.slot = static_cast<std::uint32_t>(rng.uniform_to(15)); break;
      case ActionKind::DropPacket: a.count = static_cast<std::uint32_t>(1 + rng.uniform_to(2)); break;
      case ActionKind::CorruptCiphertext: a.offset = static_cast<std::uint32_t>(rng.uniform_to(200)); break;
    }
    p.actions.push_back(std::move(a));
  }
  return p;
}

enum class Outcome : std::uint8_t { NoEffect, Rejected, DeliveredCorrupted };

constexpr const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::NoEffect: return "no_effect";
    case Outcome::Rejected: return "rejected";
    case Outcome::DeliveredCorrupted: return "delivered_corrupted";
  }
  return "?";
}

struct ActionResult {
  AdversaryAction action;
  Outcome outcome = Outcome::NoEffect;
  std::string note;
};

struct ViolationReport {
  std::vector<ActionResult> results;
  std::vector<std::string> violations;
  std::uint64_t auth_fail = 0;
  std::uint64_t denied = 0;
  std::uint64_t metadata_suspect = 0;
  std::uint64_t delivered = 0;
  std::uint64_t blocked = 0;

  bool ok() const { return violations.empty(); }

  std::size_t count(Outcome o) const {
    std::size_t n = 0;
    for (const auto& r : results) n += r.outcome == o;
    return n;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["ok"] = ok();
    j["violations"] = violations;
    nlohmann::ordered_json acts = nlohmann::ordered_json::array();
    for (const auto& r : results) acts.push_back({{"action", r.action.str()}, {"outcome", to_string(r.outcome)}, {"note", r.note}});
    j["actions"] = acts;
    j["auth_fail"] = auth_fail;
    j["device_access_denied"] = denied;
    j["metadata_suspect"] = metadata_suspect;
    j["delivered"] = delivered;
    j["blocked"] = blocked;
    return j;
  }
};

namespace detail {

class AdversaryRun {
 public:
  static constexpr std::uint32_t kProbeLen = 64;

  AdversaryRun(const AdversaryPlan& plan, std::uint64_t seed)
      : plan_(plan), tb_(config()), rng_(seed), sa_cfg_(make_sa(rng_)),
        c_out_(sa_cfg_, SaDirection::Outbound), s_in_(sa_cfg_, SaDirection::Inbound) {
    for (auto& b : canary_) b = static_cast<std::uint8_t>(rng_());
  }

  ViolationReport run() {
    for (const auto& a : plan_.actions) {
      ActionResult r{a, Outcome::NoEffect, {}};
      switch (a.kind) {
        case ActionKind::TamperShared: a.post_copy ? tamper_post(a, r) : tamper_pre(a, r); break;
        case ActionKind::ForgeWriteback: forge_writeback(a, r); break;
        case ActionKind::ForgeAddress: forge_address(a, r); break;
        case ActionKind::ReplayDescriptor: replay(a, r); break;
        case ActionKind::DropPacket: drop(a, r); break;
        case ActionKind::CorruptCiphertext: corrupt(a, r); break;
      }
      rep_.results.push_back(std::move(r));
    }
    final_checks();
    return std::move(rep_);
  }

 private:
  static TestbedConfig config() {
    TestbedConfig c;
    c.port.pools = PoolConfig{32, kDefaultMbufSize, true, 0};
    c.port.ring_capacity = 8;
    c.instrument = true;
    c.capture = true;
    return c;
  }

  static SaConfig make_sa(Xoshiro256& rng) {
    SaConfig c;
    c.spi = 0x2000 + static_cast<std::uint32_t>(rng.uniform_to(0xFFFF));
    for (auto& b : c.key) b = static_cast<std::uint8_t>(rng());
    c.salt = static_cast<std::uint32_t>(rng());
    return c;
  }

  struct Sent {
    std::vector<std::uint8_t> plain;
    std::uint32_t wire_len = 0;
  };

  struct Snapshot {
    std::uint64_t auth = 0, malformed = 0, suspect = 0, rx_errors = 0, drops = 0, denied = 0;
  };

  Snapshot snap() {
    const auto& c = tb_.server().counters();
    return {ctr_.auth_fail, ctr_.malformed, c.metadata_suspect, c.rx_errors, c.drops, tb_.memory().device_denied_total()};
  }

  Sent send_probe(bool ipsec) {
    PortContext& port = tb_.client();
    PacketBuffer b = port.alloc();
    b.set_pkt_len(kProbeLen);
    probe::write(b.payload(), {probe::kClientAddr, probe::kServerAddr, seq_++, probe::Kind::Echo});
    auto ap = b.app_private();
    for (std::size_t i = 0; i < ap.size(); ++i) ap[i] = canary_[i % canary_.size()];
    Sent s;
    s.plain.assign(b.payload().begin(), b.payload().end());
    if (ipsec) esp_encrypt(c_out_, b, &client_ctr_);
    s.wire_len = b.pkt_len();
    if (port.tx_burst(std::span<const PacketBuffer>(&b, 1)) != 1) {
      port.free(b);
      rep_.violations.push_back("client could not transmit probe");
    }
    tb_.client_nic().step_tx(now_);
    return s;
  }

  /// Moves every frame in flight to the server RX ring. Returns the slot the
  /// next frame would land in, as seen by the device before delivery.
  std::optional<RxSlotView> deliver() {
    auto view = tb_.server_nic().rx_queue().peek();
    now_ += 1'000'000;
    tb_.server_nic().step_rx(now_);
    return view;
  }

  std::vector<PacketBuffer> receive(bool ipsec) {
    PortContext& port = tb_.server();
    auto bufs = ipsec ? lookaside_rx(port, s_in_, 64, ctr_) : port.rx_burst(64);
    rep_.delivered += bufs.size();
    return bufs;
  }

  void release(const std::vector<PacketBuffer>& bufs) {
    for (const auto& b : bufs) tb_.server().free(b);
    tb_.client().reclaim_tx();
  }

  bool contains_probe(const std::vector<PacketBuffer>& bufs, const Sent& s) const {
    for (const auto& b : bufs) {
      auto p = b.payload();
      if (p.size() == s.plain.size() && std::equal(p.begin(), p.end(), s.plain.begin())) return true;
    }
    return false;
  }

  // Outcome from what came out of the receive path relative to the probe.
  Outcome classify(const std::vector<PacketBuffer>& bufs, const Sent* s, const Snapshot& before) {
    Snapshot after = snap();
    bool foreign = false;
    for (const auto& b : bufs) {
      auto p = b.payload();
      if (!s || p.size() != s->plain.size() || !std::equal(p.begin(), p.end(), s->plain.begin())) foreign = true;
    }
    if (foreign || after.auth > before.auth || after.malformed > before.malformed) return Outcome::DeliveredCorrupted;
    if (after.suspect > before.suspect || after.rx_errors > before.rx_errors || after.drops > before.drops ||
        after.denied > before.denied)
      return Outcome::Rejected;
    return Outcome::NoEffect;
  }

  void device_write(const Handle& h, std::span<const std::uint8_t> bytes) {
    try {
      tb_.memory().write(h, Side::Device, bytes);
    } catch (const Error&) {
      ++rep_.denied;
    }
  }

  void tamper_pre(const AdversaryAction& a, ActionResult& r) {
    bool ipsec = plan_.ipsec;
    Snapshot before = snap();
    Sent s = send_probe(ipsec);
    auto view = deliver();
    if (view) {
      std::uint32_t off = a.offset % s.wire_len;
      std::size_t n = std::min<std::size_t>(a.bytes.size(), s.wire_len - off);
      device_write(view->packet_address.sub(off, n), std::span(a.bytes).first(n));
    }
    auto bufs = receive(ipsec);
    r.outcome = classify(bufs, &s, before);
    if (r.outcome == Outcome::DeliveredCorrupted) r.note = ipsec ? "caught by ESP authentication" : "payload altered before copy";
    release(bufs);
  }

  void tamper_post(const AdversaryAction& a, ActionResult& r) {
    bool ipsec = plan_.ipsec;
    Sent s = send_probe(ipsec);
    auto view = deliver();
    auto bufs = receive(ipsec);
    std::vector<std::vector<std::uint8_t>> copies;
    for (const auto& b : bufs) copies.emplace_back(b.payload().begin(), b.payload().end());
    if (view) {
      std::uint32_t off = a.offset % s.wire_len;
      std::size_t n = std::min<std::size_t>(a.bytes.size(), s.wire_len - off);
      device_write(view->packet_address.sub(off, n), std::span(a.bytes).first(n));
    }
    bool changed = false;
    for (std::size_t i = 0; i < bufs.size(); ++i) {
      auto p = bufs[i].payload();
      changed |= !std::equal(p.begin(), p.end(), copies[i].begin(), copies[i].end());
    }
    r.outcome = changed ? Outcome::DeliveredCorrupted : Outcome::NoEffect;
    if (changed) rep_.violations.push_back("post-copy tamper changed application bytes: " + a.str());
    release(bufs);
  }

  void forge_writeback(const AdversaryAction& a, ActionResult& r) {
    Snapshot before = snap();
    DeviceRxQueue& q = tb_.server_nic().rx_queue();
    if (a.slot) {
      q.write_fields(*a.slot % q.capacity(), a.fields);
    } else if (auto v = q.peek()) {
      // A ready status consumes the slot from the device's point of view.
      if (a.fields.status_error & layout::kRxStatusDd) q.writeback(v->slot, a.fields);
      else q.write_fields(v->slot, a.fields);
    }
    auto bufs = receive(plan_.ipsec);
    r.outcome = classify(bufs, nullptr, before);
    Snapshot after = snap();
    if (after.suspect > before.suspect) r.note = "length clamped, metadata suspect";
    release(bufs);
  }

  void forge_address(const AdversaryAction& a, ActionResult& r) {
    Memory& mem = tb_.memory();
    RegionId target = tb_.private_regions()[a.target_server ? 1 : 0];
    const Arena& arena = mem.arena(target);
    std::uint64_t len = std::min<std::uint64_t>(a.length, 0xFFFF);
    len = std::min<std::uint64_t>(len, arena.size());
    Handle h{target, a.offset % (arena.size() - len + 1), len};
    auto bytes = arena.bytes().subspan(h.offset, h.len);
    Snapshot before = snap();
    bool touched = false;
    // Only device activity may run between snapshot and compare; the VMs write
    // their own private memory all the time.
    auto device_only = [&](auto&& fn) {
      std::vector<std::uint8_t> prior(bytes.begin(), bytes.end());
      fn();
      touched |= !std::equal(prior.begin(), prior.end(), bytes.begin());
    };

    SimNic& nic = tb_.server_nic();
    device_only([&] {
      nic.try_access(h, false, now_);
      nic.try_access(h, true, now_);
    });

    // Redirect the next RX descriptor at private memory, let a packet arrive,
    // then put the real address back and let the retry go through.
    DeviceRxQueue& q = nic.rx_queue();
    bool ipsec = plan_.ipsec;
    std::vector<PacketBuffer> bufs;
    if (auto v = q.peek()) {
      Handle addr = q.field(v->slot, layout::kRxPacketAddress, 8);
      auto original = mem.read_bytes(addr, Side::Device);
      send_probe(ipsec);
      device_only([&] {
        mem.write(addr, Side::Device, encode_handle(h));
        deliver();
        mem.write(addr, Side::Device, original);
      });
      tb_.client().reclaim_tx();
      // The frame was lost to the denied DMA; send another one honestly.
      send_probe(ipsec);
      deliver();
      bufs = receive(ipsec);
    }
    if (touched) rep_.violations.push_back("private bytes changed by forged access: " + a.str());
    if (mem.device_denied_total() == before.denied) rep_.violations.push_back("forged private access not denied: " + a.str());
    r.outcome = touched ? Outcome::DeliveredCorrupted : Outcome::Rejected;
    r.note = "device access denied";
    release(bufs);
  }

  void replay(const AdversaryAction& a, ActionResult& r) {
    bool ipsec = plan_.ipsec;
    send_probe(ipsec);
    deliver();
    auto bufs = receive(ipsec);
    release(bufs);
    DeviceTxQueue& q = tb_.client_nic().tx_queue();
    q.write_status(*a.slot % q.capacity(), static_cast<std::uint8_t>(1 + rng_.uniform_to(254)));
    std::size_t again = tb_.client().reclaim_tx();
    if (again) {
      rep_.violations.push_back("replayed completion reclaimed a descriptor: " + a.str());
      r.outcome = Outcome::DeliveredCorrupted;
    } else {
      r.outcome = Outcome::Rejected;
      r.note = "completion for a descriptor not in flight ignored";
    }
  }

  void drop(const AdversaryAction& a, ActionResult& r) {
    bool ipsec = plan_.ipsec;
    std::vector<PacketBuffer> all;
    for (std::uint32_t i = 0; i < a.count; ++i) {
      send_probe(ipsec);
      now_ += 1'000'000;
      while (tb_.client_to_server().pop_due(now_)) ++rep_.blocked;
      auto bufs = receive(ipsec);
      all.insert(all.end(), bufs.begin(), bufs.end());
    }
    r.outcome = Outcome::NoEffect;
    r.note = "liveness only";
    release(all);
  }

  void corrupt(const AdversaryAction& a, ActionResult& r) {
    Snapshot before = snap();
    Sent s = send_probe(true);
    auto view = deliver();
    if (view) {
      std::uint32_t esp_len = s.wire_len - kAddrHeaderLen;
      std::uint32_t off = kAddrHeaderLen + a.offset % esp_len;
      Handle at = view->packet_address.sub(off, 1);
      try {
        auto b = tb_.memory().read_bytes(at, Side::Device);
        b[0] ^= 0xFF;
        tb_.memory().write(at, Side::Device, b);
      } catch (const Error&) {
        ++rep_.denied;
      }
    }
    auto bufs = receive(true);
    r.outcome = classify(bufs, &s, before);
    if (contains_probe(bufs, s)) rep_.violations.push_back("corrupted ciphertext authenticated: " + a.str());
    if (ctr_.auth_fail > before.auth) r.note = "auth_fail";
    release(bufs);
  }

  void final_checks() {
    Memory& mem = tb_.memory();
    rep_.auth_fail = ctr_.auth_fail;
    rep_.metadata_suspect = tb_.server().counters().metadata_suspect;
    rep_.denied = mem.device_denied_total();

    if (tb_.device_observable(canary_)) rep_.violations.push_back("app_private canary visible to device");
    if (tb_.device_observable(sa_cfg_.key)) rep_.violations.push_back("SA key visible to device");

    for (RegionId id : tb_.private_regions()) {
      const auto& t = mem.arena(id).tally();
      if (t.device_reads || t.device_writes) rep_.violations.push_back("device accessed private region " + std::to_string(id));
    }

    for (PortContext* port : {&tb_.server(), &tb_.client()}) {
      const RxRing& ring = eal::rx_ring(*port);
      for (std::uint32_t slot = 0; slot < ring.capacity(); ++slot) {
        std::uint64_t n = ring.harvest_count(slot);
        auto check = [&](std::uint64_t off, std::uint64_t len, bool exact) {
          Handle f = ring.field(slot, off, len);
          const Arena& ar = mem.arena(f.region);
          for (std::uint64_t i = 0; i < len; ++i) {
            std::uint32_t reads = ar.reads(Side::Vm, f.offset + i);
            if (exact ? reads != n : reads < n) {
              rep_.violations.push_back("writeback field read " + std::to_string(reads) + " times for " +
                                        std::to_string(n) + " harvests (slot " + std::to_string(slot) + ")");
              return;
            }
          }
        };
        check(layout::kRxPacketInfo, 2, true);
        check(layout::kRxRss, 4, true);
        check(layout::kRxVlanTag, 2, true);
        check(layout::kRxLength, 2, true);
        check(layout::kRxStatusError, 2, false);
      }
    }

    tb_.teardown();
    for (RegionId id : tb_.shared_regions())
      if (!mem.all_zero(id)) rep_.violations.push_back("shared region " + std::to_string(id) + " not zero after teardown");
  }

  AdversaryPlan plan_;
  Testbed tb_;
  Xoshiro256 rng_;
  SaConfig sa_cfg_;
  SecurityAssociation c_out_, s_in_;
  CryptoCounter ctr_, client_ctr_;
  std::array<std::uint8_t, 16> canary_{};
  std::uint64_t now_ = 0;
  std::uint32_t seq_ = 0;
  ViolationReport rep_;
};

}  // namespace detail

/// Runs one plan on a fresh two-VM testbed. `seed` picks the SA key and the
/// canary bytes.
inline ViolationReport run_adversary(const AdversaryPlan& plan, std::uint64_t seed = 1) {
  return detail::AdversaryRun(plan, seed).run();
}

struct AdversarySuiteResult {
  std::size_t plans = 0;
  std::size_t failed = 0;
  std::size_t actions = 0;
  std::map<Outcome, std::size_t> outcomes;
  std::map<ActionKind, std::size_t> kinds;
  std::vector<std::string> first_failures;
};

inline AdversarySuiteResult run_adversary_suite(std::size_t plans, std::uint64_t seed) {
  AdversarySuiteResult out;
  for (std::size_t i = 0; i < plans; ++i) {
    AdversaryPlan p = random_plan(seed + i);
    ViolationReport r = run_adversary(p, seed * 7919 + i);
    ++out.plans;
    for (const auto& a : r.results) {
      ++out.actions;
      ++out.outcomes[a.outcome];
      ++out.kinds[a.action.kind];
    }
    if (!r.ok()) {
      ++out.failed;
      if (out.first_failures.size() < 5) out.first_failures.push_back(p.str() + "=> " + r.violations.front());
    }
  }
  return out;
}

}  // namespace cvmio
