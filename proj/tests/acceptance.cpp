// One line per acceptance criterion; exit status is nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "cvmio/cvmio.hpp"

using namespace cvmio;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

int failures = 0;

void criterion(int n, const char* name, const std::function<Outcome()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.ok = false;
    o.detail = std::string("exception: ") + e.what();
  }
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.ok) ++failures;
  std::printf("%s %d %s (%.2fs)%s%s\n", o.ok ? "PASS" : "FAIL", n, name, s, o.detail.empty() ? "" : ": ",
              o.detail.c_str());
  std::fflush(stdout);
}

std::vector<std::uint8_t> hex(std::string_view s) { return detail::parse_hex(s); }

// Table, typed in again from the printed factor matrix.
const char* kTable[] = {
    "Y Y N Y Y Y Y N N N",       "Y N N Y N N N N N N",        "Y Y N Y Y Y Y Y N N",
    "Y Y Y Y Y Y Y Y Y Y",       "Y Y Y Y Y Y Y Y Y Y",        "Y Y N+ Y Y Y Y Y N+ N+",
    "N N N Y Y Y Y N N N",       "N N N Y Y Y Y N N Y",        "N N N N N Y N N N N",
    "N N N N N Y Y Y N* N*",     "N- N- N- N- N- N- Y Y Y Y",  "N N N N N N Y Y N+ N+",
    "N N N N N N N Y Y N",
};

Outcome table_fixture() {
  Outcome o;
  const auto& m = factor_matrix();
  for (std::size_t r = 0; r < kFactorCount; ++r) {
    std::istringstream in(kTable[r]);
    std::string cell;
    for (std::size_t c = 0; c < kConfigCount; ++c) {
      in >> cell;
      o.expect(cell == symbol(m[r][c]), std::string(to_string(kAllFactors[r])) + "/" + std::string(to_string(kAllConfigs[c])));
    }
  }
  o.expect(diff_configs(VmConfiguration::SnpShadowPool, VmConfiguration::SnpTioDpdk) ==
               std::vector<OverheadFactor>{OverheadFactor::BounceBufferCopy, OverheadFactor::IoPcieEncryption},
           "diff(snp-shadow-pool, snp-tio-dpdk)");
  return o;
}

Outcome memory_accounting() {
  Outcome o;
  o.expect(pool_memory_footprint(PoolConfig{65456, 2176, true, 0}).shared == 142432256ull, "65456 x 2176");
  o.expect(pool_memory_footprint(PoolConfig{8192, 2176, true, 0}).shared == 17825792ull, "8192 x 2176");
  return o;
}

Outcome formula() {
  Outcome o;
  const std::pair<double, std::uint64_t> cases[] = {{100, 10000}, {200, 5000}, {500, 2000}, {1000, 1000}};
  for (auto [n, want] : cases) o.expect(max_connections(8e9, n, 1000) == want, "payload " + std::to_string(int(n)));
  return o;
}

Outcome security_suite() {
  Outcome o;
  auto t0 = std::chrono::steady_clock::now();
  auto s = run_adversary_suite(1000, 20261016);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.expect(s.plans == 1000, "plan count");
  o.expect(s.failed == 0, std::to_string(s.failed) + " plans failed" +
                              (s.first_failures.empty() ? "" : ", first: " + s.first_failures.front()));
  o.expect(s.kinds.size() == 6, "not every action kind exercised");
  o.expect(secs < 60.0, "took " + std::to_string(secs) + " s");
  if (o.ok) {
    std::ostringstream d;
    d << s.actions << " actions: " << s.outcomes[cvmio::Outcome::NoEffect] << " no_effect, "
      << s.outcomes[cvmio::Outcome::Rejected] << " rejected, " << s.outcomes[cvmio::Outcome::DeliveredCorrupted]
      << " delivered_corrupted";
    o.detail = d.str();
  }
  return o;
}

Outcome single_copy() {
  Outcome o;
  TestbedConfig c;
  c.port.pools = PoolConfig{512, kDefaultMbufSize, true, 0};
  c.port.ring_capacity = 256;
  Testbed tb(c);
  std::mt19937 rng(10);
  std::uint64_t sent_c = 0, sent_s = 0, recv_c = 0, recv_s = 0, bytes = 0;
  std::uint64_t now = 0;
  const std::uint64_t total = 10000;
  while (sent_c < total / 2 || recv_c < sent_s) {
    if (sent_c < total / 2) {
      std::uint32_t len = 16 + rng() % 1400;
      PacketBuffer b = tb.client().alloc();
      b.set_pkt_len(len);
      probe::write(b.payload(), {probe::kClientAddr, probe::kServerAddr, std::uint32_t(sent_c), probe::Kind::Echo});
      std::vector<PacketBuffer> v{b};
      if (tb.client().tx_burst(v) == 1) {
        ++sent_c;
        bytes += len;
      } else {
        tb.client().free(b);
      }
    }
    now += 1000;
    tb.step_nics(now);
    for (auto& b : tb.server().rx_burst(32)) {
      ++recv_s;
      bytes += b.pkt_len();
      probe::turn_around(b.payload(), probe::Kind::Echo);
      std::uint32_t len = b.pkt_len();
      std::vector<PacketBuffer> v{b};
      if (tb.server().tx_burst(v) == 1) {
        ++sent_s;
        bytes += len;
      } else {
        tb.server().free(b);
      }
    }
    for (auto& b : tb.client().rx_burst(32)) {
      ++recv_c;
      bytes += b.pkt_len();
      tb.client().free(b);
    }
    tb.client().reclaim_tx();
    tb.server().reclaim_tx();
    if (now > 1'000'000'000) break;
  }
  auto cc = tb.client().counters(), sc = tb.server().counters();
  o.expect(sent_c + sent_s == total, "sent " + std::to_string(sent_c + sent_s));
  o.expect(recv_c + recv_s == total, "received " + std::to_string(recv_c + recv_s));
  o.expect(cc.copies_rx + sc.copies_rx == recv_c + recv_s, "copies_rx");
  o.expect(cc.copies_tx + sc.copies_tx == sent_c + sent_s, "copies_tx");
  o.expect(cc.bytes_copied + sc.bytes_copied == bytes, "bytes_copied");
  return o;
}

// Published GCM vectors are the oracle for the cipher wrapper.
Outcome crypto() {
  Outcome o;
  struct Kat {
    const char *key, *iv, *pt, *aad, *ct, *tag;
  };
  const Kat kats[] = {
      {"00000000000000000000000000000000", "000000000000000000000000", "", "", "", "58e2fccefa7e3061367f1d57a4e7455a"},
      {"00000000000000000000000000000000", "000000000000000000000000", "00000000000000000000000000000000", "",
       "0388dace60b6a392f328c2b971b2fe78", "ab6e47d42cec13bdf53a67b21257bddf"},
      {"feffe9928665731c6d6a8f9467308308", "cafebabefacedbaddecaf888",
       "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b391aafd255",
       "",
       "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091473f5985",
       "4d5c2af327cd64a62cf35abd2ba6fab4"},
      {"feffe9928665731c6d6a8f9467308308", "cafebabefacedbaddecaf888",
       "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39",
       "feedfacedeadbeeffeedfacedeadbeefabaddad2",
       "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091",
       "5bc94fbc3221a5db94fae95ae7121a47"},
  };
  int idx = 1;
  for (const auto& k : kats) {
    auto key = hex(k.key), iv = hex(k.iv), pt = hex(k.pt), aad = hex(k.aad);
    Aes128Gcm g(std::span<const std::uint8_t, 16>(key.data(), 16));
    std::vector<std::uint8_t> ct(pt.size());
    std::array<std::uint8_t, 16> tag;
    g.seal(std::span<const std::uint8_t, 12>(iv.data(), 12), aad, pt, ct, tag);
    o.expect(ct == hex(k.ct) && std::vector<std::uint8_t>(tag.begin(), tag.end()) == hex(k.tag),
             "known-answer case " + std::to_string(idx));
    ++idx;
  }

  Memory mem;
  auto priv = mem.create_arena(RegionKind::Private, 1 << 20);
  auto shared = mem.create_arena(RegionKind::Shared, 1 << 20);
  mem.register_shared(shared);
  auto pools = init_pools(mem, PoolConfig{64, kDefaultMbufSize, true, 0}, priv, shared);
  SaConfig sa = SaConfig::parse("spi=77 key=000102030405060708090a0b0c0d0e0f salt=01020304");
  SecurityAssociation out(sa, SaDirection::Outbound), in(sa, SaDirection::Inbound);
  std::mt19937 rng(6);
  auto make = [&](const std::vector<std::uint8_t>& bytes) {
    PacketBuffer b = pools.shadow->alloc();
    b.set_pkt_len(std::uint32_t(bytes.size()));
    std::copy(bytes.begin(), bytes.end(), b.payload().begin());
    return b;
  };
  bool identity = true;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::uint8_t> pkt(8 + rng() % 2001);
    for (auto& x : pkt) x = std::uint8_t(rng());
    PacketBuffer b = make(pkt);
    esp_encrypt(out, b);
    if (try_esp_decrypt(in, b) != DecryptStatus::Ok) {
      identity = false;
      continue;
    }
    identity &= b.pkt_len() == pkt.size() && std::equal(pkt.begin(), pkt.end(), b.payload().begin());
    pools.shadow->free(b);
  }
  o.expect(identity, "decrypt(encrypt(p)) != p");

  std::vector<std::uint8_t> pkt(64);
  for (std::size_t i = 0; i < 64; ++i) pkt[i] = std::uint8_t(i);
  PacketBuffer b = make(pkt);
  esp_encrypt(out, b);
  std::vector<std::uint8_t> frame(b.payload().begin(), b.payload().end());
  pools.shadow->free(b);
  std::size_t flips = 0, caught = 0;
  for (std::size_t byte = kAddrHeaderLen; byte < frame.size(); ++byte)
    for (int bit = 0; bit < 8; ++bit) {
      auto f = frame;
      f[byte] ^= std::uint8_t(1u << bit);
      ++flips;
      caught += try_esp_decrypt(in, make(f)) == DecryptStatus::AuthFail;
    }
  o.expect(caught == flips, std::to_string(flips - caught) + " of " + std::to_string(flips) + " flips not caught");

  // Both offload modes deliver the same plaintext multiset.
  auto delivered = [&](OffloadMode mode) {
    BenchConfig c;
    c.profile = zero_profile();
    c.ipsec = mode;
    c.duration_s = 0.05;
    c.link.jitter_ns = 500;
    c.connections = 3;
    TestbedConfig tc = detail::testbed_config(c);
    Testbed tb(tc);
    SecurityAssociation co(c.sa, SaDirection::Outbound), si(c.sa, SaDirection::Inbound), so(detail::reverse_sa(c.sa), SaDirection::Outbound);
    std::unique_ptr<CryptoWorker> w;
    if (mode == OffloadMode::EmulatedInline) w = inline_attach(tb.server(), si, so);
    CryptoCounter cc, sc;
    std::mt19937 g(12);
    std::vector<PacketBuffer> v;
    for (std::uint32_t i = 0; i < 200; ++i) {
      PacketBuffer p = tb.client().alloc();
      p.set_pkt_len(16 + g() % 1000);
      probe::write(p.payload(), {probe::kClientAddr, probe::kServerAddr, i, probe::Kind::Echo});
      v.push_back(p);
    }
    std::multiset<std::vector<std::uint8_t>> got;
    for (std::uint64_t now = 0; now < 100'000'000; now += 10'000) {
      if (!v.empty()) lookaside_tx(tb.client(), co, v, cc);
      tb.client().reclaim_tx();
      tb.step_nics(now);
      std::vector<PacketBuffer> r;
      if (w) {
        w->step(64);
        r = w->rx(64);
      } else {
        r = lookaside_rx(tb.server(), si, 64, sc);
      }
      for (auto& p : r) {
        got.insert({p.payload().begin(), p.payload().end()});
        tb.server().free(p);
      }
      if (v.empty() && got.size() == 200) break;
    }
    return got;
  };
  auto a = delivered(OffloadMode::LookAside), c = delivered(OffloadMode::EmulatedInline);
  o.expect(a.size() == 200 && a == c, "plaintext multisets differ (" + std::to_string(a.size()) + " vs " +
                                          std::to_string(c.size()) + ")");
  return o;
}

Outcome orderings() {
  Outcome o;
  BenchConfig base;
  base.duration_s = 0.1;
  base.link.jitter_ns = 400;
  base.seed = 5;
  for (std::uint64_t cost : {1u, 100u, 500u, 5000u}) {
    BenchConfig i = base;
    i.notification = {NotificationKind::EmulatedInterrupt, cost};
    auto p = run_echo(base).stats, q = run_echo(i).stats;
    o.expect(p.p50_ns < q.p50_ns && p.p95_ns < q.p95_ns && p.p99_ns < q.p99_ns && p.p999_ns < q.p999_ns &&
                 p.mean_ns < q.mean_ns,
             "polling not below interrupt at exit cost " + std::to_string(cost));
  }

  BenchConfig u;
  u.workload = Workload::UdpLoad;
  u.payload = 500;
  u.rate = 1000;
  u.connections = 2000;
  u.capacity_pps = 1.5e6;
  double plain = run_load(u).achieved_bps;
  BenchConfig s = u;
  s.workload = Workload::IpsecLoad;
  s.ipsec = OffloadMode::LookAside;
  for (double k : {0.0, 1.0, 100.0, 1000.0}) {
    s.crypto_cost_ns = k;
    double x = run_load(s).achieved_bps;
    o.expect(k == 0 ? x == plain : x < plain, "ipsec throughput at crypto cost " + std::to_string(k));
  }

  BenchConfig e;
  e.rate = 5000;
  e.crypto_cost_ns = 20000;
  e.handoff_ns = 100;
  e.ipsec = OffloadMode::LookAside;
  auto look = saturation_sweep(e, 10000, 200).c_max_ns;
  e.ipsec = OffloadMode::EmulatedInline;
  auto inl = saturation_sweep(e, 10000, 200).c_max_ns;
  o.expect(inl >= look, "c_max inline " + std::to_string(inl) + " < lookaside " + std::to_string(look));
  if (o.ok) o.detail = "c_max lookaside " + std::to_string(look) + " ns, inline " + std::to_string(inl) + " ns";
  return o;
}

Outcome copy_cost() {
  Outcome o;
  double worst = 0;
  for (std::uint32_t payload : {64u, 256u, 512u, 1024u, 1500u}) {
    BenchConfig c;
    c.payload = payload;
    c.duration_s = 0.1;
    BenchConfig n = c;
    n.copy = CopyModel::NoCopy;
    double with = run_echo(c).stats.mean_ns, without = run_echo(n).stats.mean_ns;
    double d = (with - without) / with;
    worst = std::max(worst, d);
    o.expect(d < 0.02, "payload " + std::to_string(payload) + " delta " + std::to_string(d));
  }
  if (o.ok) o.detail = "largest delta " + std::to_string(worst * 100) + "%";
  return o;
}

Outcome statistics() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::vector<std::uint64_t> v(10000);
  for (auto& x : v) x = rng() % 1'000'000;
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (double q : {0.5, 0.95, 0.99, 0.999}) {
    // Smallest rank k with k/n >= q, using integer arithmetic on q*1000.
    std::uint64_t qm = std::uint64_t(std::llround(q * 1000));
    std::uint64_t k = (qm * sorted.size() + 999) / 1000;
    o.expect(percentile(v, q) == sorted[k - 1], "q=" + std::to_string(q));
  }
  BenchConfig c;
  c.link.jitter_ns = 700;
  c.link.loss_rate = 0.02;
  c.connections = 5;
  c.duration_s = 0.05;
  c.seed = 31;
  auto a = to_json(run_echo(c).stats).dump(), b = to_json(run_echo(c).stats).dump();
  o.expect(a == b, "echo reports differ");
  BenchConfig l;
  l.workload = Workload::UdpLoad;
  l.connections = 100;
  o.expect(format_load_report(run_load(l), ReportFormat::Json) == format_load_report(run_load(l), ReportFormat::Json),
           "load reports differ");
  return o;
}

}  // namespace

int main() {
  criterion(1, "factor table fixture and differencing", table_fixture);
  criterion(2, "pool memory accounting", memory_accounting);
  criterion(3, "max connections formula", formula);
  criterion(4, "security suite over 1000 random adversary plans", security_suite);
  criterion(5, "single copy accounting over 10000 packets", single_copy);
  criterion(6, "crypto known answers, round trip, bit flips, mode equivalence", crypto);
  criterion(7, "simulation orderings", orderings);
  criterion(8, "copy cost below 2% of RTT", copy_cost);
  criterion(9, "percentiles and report determinism", statistics);
  std::printf("%s: %d failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
