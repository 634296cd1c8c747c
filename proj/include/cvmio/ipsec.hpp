#pragma once

// ESP transport-mode framing with AES-128-GCM, look-aside helpers and the
// CPU-emulated inline crypto worker.
//
// A packet in a shadow buffer starts with an 8-byte clear addressing header
// (u32 src, u32 dst) followed by the payload. Encryption rewrites it in place:
//
//   [addr 8][spi 4 BE][seq 4 BE][iv 8 = seq64 BE][ciphertext][icv 16]
//
// ciphertext = payload || pad 1,2,3.. || pad_len || next_header, padded so
// its length is a multiple of 4. nonce = salt || iv, aad = spi || seq32.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cvmio/aead.hpp"
#include "cvmio/pools.hpp"
#include "cvmio/spsc_queue.hpp"

namespace cvmio {

inline constexpr std::uint32_t kAddrHeaderLen = 8;
inline constexpr std::uint32_t kEspHeaderLen = 8;
inline constexpr std::uint32_t kEspIvLen = 8;
inline constexpr std::uint32_t kEspIcvLen = 16;
inline constexpr std::uint32_t kEspOverhead = 40;  // worst case growth
inline constexpr std::uint32_t kMinEspFrame = kAddrHeaderLen + kEspHeaderLen + kEspIvLen + 4 + kEspIcvLen;
inline constexpr std::uint8_t kEspNextHeaderUdp = 17;
inline constexpr std::uint16_t kFlagEsp = 0x0002;

enum class SaDirection : std::uint8_t { Inbound, Outbound };
enum class OffloadMode : std::uint8_t { LookAside, EmulatedInline };

constexpr const char* to_string(OffloadMode m) { return m == OffloadMode::LookAside ? "lookaside" : "inline"; }

/// Exact on-wire length of an encrypted frame for a clear packet of pkt_len
/// bytes (addressing header included).
constexpr std::uint32_t esp_wire_length(std::uint32_t pkt_len) {
  std::uint32_t body = pkt_len - kAddrHeaderLen + 2;
  return kAddrHeaderLen + kEspHeaderLen + kEspIvLen + (body + 3) / 4 * 4 + kEspIcvLen;
}

namespace detail {
inline int hex_nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

inline std::vector<std::uint8_t> parse_hex(std::string_view s) {
  if (s.size() % 2) throw Error(Errc::ParseError, "odd-length hex string");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < s.size(); i += 2) {
    int hi = hex_nibble(s[i]), lo = hex_nibble(s[i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::ParseError, "bad hex digit in '" + std::string(s) + "'");
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}

inline void put_be32(std::uint8_t* p, std::uint32_t v) {
  p[0] = std::uint8_t(v >> 24);
  p[1] = std::uint8_t(v >> 16);
  p[2] = std::uint8_t(v >> 8);
  p[3] = std::uint8_t(v);
}
inline std::uint32_t get_be32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 | p[3];
}
}  // namespace detail

struct SaConfig {
  std::uint32_t spi = 0;
  std::array<std::uint8_t, kGcmKeyLen> key{};
  std::uint32_t salt = 0;
  OffloadMode mode = OffloadMode::LookAside;

  /// `spi=<u32> key=<32 hex> salt=<8 hex> mode=<lookaside|inline>`
  static SaConfig parse(std::string_view line) {
    SaConfig c;
    bool have_spi = false, have_key = false, have_salt = false;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw Error(Errc::ParseError, "expected key=value, got '" + tok + "'");
      std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
      if (k == "spi") {
        try {
          std::size_t used = 0;
          unsigned long long x = std::stoull(v, &used, 0);
          if (used != v.size() || x > 0xFFFFFFFFull) throw Error(Errc::ParseError);
          c.spi = static_cast<std::uint32_t>(x);
        } catch (const std::exception&) {
          throw Error(Errc::ParseError, "bad spi '" + v + "'");
        }
        have_spi = true;
      } else if (k == "key") {
        auto b = detail::parse_hex(v);
        if (b.size() != kGcmKeyLen) throw Error(Errc::ParseError, "key must be 32 hex digits");
        std::copy(b.begin(), b.end(), c.key.begin());
        have_key = true;
      } else if (k == "salt") {
        auto b = detail::parse_hex(v);
        if (b.size() != 4) throw Error(Errc::ParseError, "salt must be 8 hex digits");
        c.salt = detail::get_be32(b.data());
        have_salt = true;
      } else if (k == "mode") {
        if (v == "lookaside") c.mode = OffloadMode::LookAside;
        else if (v == "inline") c.mode = OffloadMode::EmulatedInline;
        else throw Error(Errc::ParseError, "mode must be lookaside or inline");
      } else {
        throw Error(Errc::ParseError, "unknown SA field '" + k + "'");
      }
    }
    if (!have_spi || !have_key || !have_salt) throw Error(Errc::ParseError, "SA needs spi, key and salt");
    return c;
  }

  /// One SA per non-empty line; '#' starts a comment.
  static std::vector<SaConfig> load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(Errc::IoError, "cannot open " + path);
    std::vector<SaConfig> out;
    std::string line;
    while (std::getline(f, line)) {
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out.push_back(parse(line));
    }
    return out;
  }
};

struct CryptoCounter {
  std::uint64_t encrypted = 0;
  std::uint64_t decrypted = 0;
  std::uint64_t auth_fail = 0;
  std::uint64_t malformed = 0;
  std::uint64_t replays = 0;
  std::uint64_t queue_drops = 0;

  std::uint64_t aes_ops() const { return encrypted + decrypted + auth_fail; }
};

enum class DecryptStatus : std::uint8_t { Ok, AuthFail, Malformed };

class SecurityAssociation {
 public:
  SecurityAssociation(const SaConfig& cfg, SaDirection dir) : cfg_(cfg), dir_(dir), gcm_(cfg.key) {}

  std::uint32_t spi() const { return cfg_.spi; }
  std::uint32_t salt() const { return cfg_.salt; }
  SaDirection direction() const { return dir_; }
  OffloadMode mode() const { return cfg_.mode; }

  /// Outbound: sequence number the next packet will carry.
  std::uint64_t next_seq() const { return seq_; }
  void set_next_seq(std::uint64_t s) { seq_ = s; }

  /// Inbound: count (but do not drop) packets whose seq is not above the
  /// highest seen so far.
  void set_replay_check(bool on) { replay_check_ = on; }

  Aes128Gcm& gcm() { return gcm_; }

  /// Claims the next outbound sequence number.
  std::uint64_t take_seq() {
    if (seq_ > 0xFFFFFFFFull) throw Error(Errc::SeqExhausted, "spi " + std::to_string(spi()));
    return seq_++;
  }

  /// Inbound bookkeeping after a successful open; true if the sequence number
  /// looks replayed.
  bool note_seq(std::uint32_t seq) {
    if (!replay_check_) return false;
    if (seq <= highest_seen_) return true;
    highest_seen_ = seq;
    return false;
  }

  std::array<std::uint8_t, kGcmNonceLen> nonce(const std::uint8_t* iv) const {
    std::array<std::uint8_t, kGcmNonceLen> n;
    detail::put_be32(n.data(), cfg_.salt);
    std::memcpy(n.data() + 4, iv, kEspIvLen);
    return n;
  }

 private:
  SaConfig cfg_;
  SaDirection dir_;
  Aes128Gcm gcm_;
  std::uint64_t seq_ = 1;
  bool replay_check_ = false;
  std::uint64_t highest_seen_ = 0;
};

/// In-place ESP encryption of a single-segment shadow buffer.
inline void esp_encrypt(SecurityAssociation& sa, const PacketBuffer& buf, CryptoCounter* ctr = nullptr) {
  if (sa.direction() != SaDirection::Outbound) throw Error(Errc::ConfigInvalid, "encrypt needs an outbound SA");
  if (buf.next()) throw Error(Errc::Malformed, "ESP needs a single-segment packet");
  std::uint32_t len = buf.pkt_len();
  if (len < kAddrHeaderLen) throw Error(Errc::Malformed, "packet shorter than addressing header");
  if (std::uint64_t{len} + kEspOverhead > buf.data_room())
    throw Error(Errc::Oversize, std::to_string(len) + " + " + std::to_string(kEspOverhead) + " > " +
                                    std::to_string(buf.data_room()));
  std::uint64_t seq = sa.take_seq();
  auto d = buf.data();
  std::uint32_t body = len - kAddrHeaderLen;
  std::uint32_t ct_len = (body + 2 + 3) / 4 * 4;
  std::uint32_t pad = ct_len - body - 2;
  std::uint8_t* hdr = d.data() + kAddrHeaderLen;
  std::uint8_t* ct = hdr + kEspHeaderLen + kEspIvLen;

  std::memmove(ct, hdr, body);
  for (std::uint32_t i = 0; i < pad; ++i) ct[body + i] = static_cast<std::uint8_t>(i + 1);
  ct[body + pad] = static_cast<std::uint8_t>(pad);
  ct[body + pad + 1] = kEspNextHeaderUdp;

  detail::put_be32(hdr, sa.spi());
  detail::put_be32(hdr + 4, static_cast<std::uint32_t>(seq));
  std::uint8_t* iv = hdr + kEspHeaderLen;
  detail::put_be32(iv, static_cast<std::uint32_t>(seq >> 32));
  detail::put_be32(iv + 4, static_cast<std::uint32_t>(seq));

  auto n = sa.nonce(iv);
  sa.gcm().seal(n, std::span<const std::uint8_t>(hdr, kEspHeaderLen), std::span<const std::uint8_t>(ct, ct_len),
               std::span<std::uint8_t>(ct, ct_len), std::span<std::uint8_t, kGcmTagLen>(ct + ct_len, kGcmTagLen));
  buf.set_pkt_len(kAddrHeaderLen + kEspHeaderLen + kEspIvLen + ct_len + kEspIcvLen);
  buf.set_flags(static_cast<std::uint16_t>(buf.flags() | kFlagEsp));
  if (ctr) ++ctr->encrypted;
}

/// In-place ESP decryption. On any failure the buffer is freed back to its
/// pool and the status says why.
inline DecryptStatus try_esp_decrypt(SecurityAssociation& sa, const PacketBuffer& buf, CryptoCounter* ctr = nullptr) {
  if (sa.direction() != SaDirection::Inbound) throw Error(Errc::ConfigInvalid, "decrypt needs an inbound SA");
  auto fail = [&](DecryptStatus s) {
    if (ctr) ++(s == DecryptStatus::AuthFail ? ctr->auth_fail : ctr->malformed);
    buf.pool()->free(buf);
    return s;
  };
  std::uint32_t len = buf.pkt_len();
  if (buf.next() || len < kMinEspFrame) return fail(DecryptStatus::Malformed);
  std::uint32_t ct_len = len - (kAddrHeaderLen + kEspHeaderLen + kEspIvLen + kEspIcvLen);
  if (ct_len % 4) return fail(DecryptStatus::Malformed);

  auto d = buf.data();
  std::uint8_t* hdr = d.data() + kAddrHeaderLen;
  std::uint8_t* iv = hdr + kEspHeaderLen;
  std::uint8_t* ct = iv + kEspIvLen;
  if (detail::get_be32(hdr) != sa.spi()) return fail(DecryptStatus::AuthFail);
  std::uint32_t seq32 = detail::get_be32(hdr + 4);

  auto n = sa.nonce(iv);
  bool ok = sa.gcm().open(n, std::span<const std::uint8_t>(hdr, kEspHeaderLen), std::span<const std::uint8_t>(ct, ct_len),
                         std::span<std::uint8_t>(ct, ct_len),
                         std::span<const std::uint8_t, kGcmTagLen>(ct + ct_len, kGcmTagLen));
  if (!ok) return fail(DecryptStatus::AuthFail);

  std::uint8_t pad = ct[ct_len - 2];
  if (std::uint32_t{pad} + 2 > ct_len) return fail(DecryptStatus::Malformed);
  std::uint32_t body = ct_len - 2 - pad;
  for (std::uint32_t i = 0; i < pad; ++i)
    if (ct[body + i] != i + 1) return fail(DecryptStatus::Malformed);

  if (sa.note_seq(seq32) && ctr) ++ctr->replays;
  std::memmove(hdr, ct, body);
  buf.set_pkt_len(kAddrHeaderLen + body);
  buf.set_flags(static_cast<std::uint16_t>(buf.flags() & ~kFlagEsp));
  if (ctr) ++ctr->decrypted;
  return DecryptStatus::Ok;
}

/// Throwing form of try_esp_decrypt.
inline void esp_decrypt(SecurityAssociation& sa, const PacketBuffer& buf, CryptoCounter* ctr = nullptr) {
  switch (try_esp_decrypt(sa, buf, ctr)) {
    case DecryptStatus::Ok: return;
    case DecryptStatus::AuthFail: throw Error(Errc::AuthFail, "spi " + std::to_string(sa.spi()));
    case DecryptStatus::Malformed: throw Error(Errc::Malformed);
  }
}

/// rx_burst followed by batch decryption on the calling worker. Packets that
/// fail authentication are dropped and counted.
inline std::vector<PacketBuffer> lookaside_rx(PortContext& port, SecurityAssociation& sa, std::size_t max,
                                              CryptoCounter& ctr) {
  std::vector<PacketBuffer> out;
  for (const PacketBuffer& b : port.rx_burst(max))
    if (try_esp_decrypt(sa, b, &ctr) == DecryptStatus::Ok) out.push_back(b);
  return out;
}

/// Encrypts (once) and sends. Accepted buffers are removed from the front of
/// `bufs`; the rest remain, already encrypted, for a later call.
inline std::size_t lookaside_tx(PortContext& port, SecurityAssociation& sa, std::vector<PacketBuffer>& bufs,
                                CryptoCounter& ctr) {
  for (const PacketBuffer& b : bufs)
    if (!(b.flags() & kFlagEsp)) esp_encrypt(sa, b, &ctr);
  std::size_t n = port.tx_burst(bufs);
  bufs.erase(bufs.begin(), bufs.begin() + static_cast<std::ptrdiff_t>(n));
  return n;
}

/// Reserved crypto worker sitting between a port and the application. The
/// application exchanges plaintext with it through two SPSC queues; the worker
/// alone calls rx_burst/tx_burst and runs AES.
class CryptoWorker {
 public:
  static constexpr std::size_t kDefaultQueueCapacity = 1024;

  CryptoWorker(PortContext& port, SecurityAssociation& inbound, SecurityAssociation& outbound,
               std::size_t queue_capacity = kDefaultQueueCapacity)
      : port_(&port),
        in_sa_(&inbound),
        out_sa_(&outbound),
        cap_(queue_capacity),
        plain_in_(queue_capacity),
        plain_out_(queue_capacity) {
    port.claim_crypto();
    port.shadow_pool().set_thread_safe(true);
  }

  ~CryptoWorker() { port_->release_crypto(); }

  CryptoWorker(const CryptoWorker&) = delete;
  CryptoWorker& operator=(const CryptoWorker&) = delete;

  // Application side.

  std::vector<PacketBuffer> rx(std::size_t max) {
    std::vector<PacketBuffer> out;
    while (out.size() < max)
      if (auto b = plain_out_.pop()) out.push_back(*b);
      else break;
    return out;
  }

  /// Queues plaintext for encryption; returns how many were taken.
  std::size_t tx(std::span<const PacketBuffer> bufs) {
    std::size_t n = 0;
    for (const auto& b : bufs) {
      if (!plain_in_.push(b)) break;
      ++n;
    }
    return n;
  }

  // Worker side.

  /// One polling pass: ingest from the RX ring, decrypt and encrypt up to
  /// batch_max each, push ciphertext to the TX ring. Returns packets
  /// transformed (including ones that failed authentication).
  std::size_t step(std::size_t batch_max) {
    if (cipher_in_.size() < cap_) {
      for (const auto& b : port_->rx_burst(std::min(batch_max, cap_ - cipher_in_.size()))) cipher_in_.push_back(b);
    }
    std::size_t done = 0;
    for (std::size_t i = 0; i < batch_max && !cipher_in_.empty(); ++i, ++done) {
      PacketBuffer b = cipher_in_.front();
      cipher_in_.pop_front();
      if (try_esp_decrypt(*in_sa_, b, &ctr_) != DecryptStatus::Ok) continue;
      if (!plain_out_.push(b)) {
        ++ctr_.queue_drops;
        port_->free(b);
      }
    }
    for (std::size_t i = 0; i < batch_max && cipher_out_.size() < cap_; ++i) {
      auto b = plain_in_.pop();
      if (!b) break;
      esp_encrypt(*out_sa_, *b, &ctr_);
      cipher_out_.push_back(*b);
      ++done;
    }
    if (!cipher_out_.empty()) {
      std::vector<PacketBuffer> batch(cipher_out_.begin(), cipher_out_.end());
      std::size_t n = port_->tx_burst(batch);
      cipher_out_.erase(cipher_out_.begin(), cipher_out_.begin() + static_cast<std::ptrdiff_t>(n));
    } else {
      port_->reclaim_tx();
    }
    return done;
  }

  /// Nothing left to transform or send.
  bool idle() const { return cipher_in_.empty() && cipher_out_.empty() && plain_in_.empty(); }

  /// Runs the worker until its private queues drain, then hands back any
  /// plaintext the application has not collected yet.
  std::vector<PacketBuffer> detach(std::size_t max_steps = 1024) {
    for (std::size_t i = 0; i < max_steps; ++i)
      if (step(cap_) == 0 && idle()) break;
    return rx(plain_out_.size() + cap_);
  }

  const CryptoCounter& counter() const { return ctr_; }
  std::size_t plain_out_size() const { return plain_out_.size(); }
  std::size_t plain_in_size() const { return plain_in_.size(); }

 private:
  PortContext* port_;
  SecurityAssociation* in_sa_;
  SecurityAssociation* out_sa_;
  std::size_t cap_;
  SpscQueue<PacketBuffer> plain_in_;
  SpscQueue<PacketBuffer> plain_out_;
  std::deque<PacketBuffer> cipher_in_;
  std::deque<PacketBuffer> cipher_out_;
  CryptoCounter ctr_;
};

inline std::unique_ptr<CryptoWorker> inline_attach(PortContext& port, SecurityAssociation& inbound,
                                                   SecurityAssociation& outbound,
                                                   OffloadMode mode = OffloadMode::EmulatedInline,
                                                   std::size_t queue_capacity = CryptoWorker::kDefaultQueueCapacity) {
  if (mode != OffloadMode::EmulatedInline) throw Error(Errc::ConfigInvalid, "inline_attach needs EmulatedInline mode");
  return std::make_unique<CryptoWorker>(port, inbound, outbound, queue_capacity);
}

}  // namespace cvmio
