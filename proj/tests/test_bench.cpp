#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "cvmio/bench.hpp"

using namespace cvmio;

namespace {

// Zero processing costs and a plain 1 us link.
BenchConfig plain_echo() {
  BenchConfig c;
  c.profile = zero_profile();
  c.link.base_latency_ns = 1000;
  c.rate = 5000;
  c.duration_s = 0.1;
  return c;
}

std::uint64_t brute_percentile(std::vector<std::uint64_t> v, double q) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  for (std::size_t k = 1; k <= n; ++k)
    if (double(k) / double(n) >= q - 1e-12) return v[k - 1];
  return v.back();
}

std::string slurp(const std::string& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(Percentile, OneToHundred) {
  std::vector<std::uint64_t> v(100);
  std::iota(v.begin(), v.end(), 1);
  std::shuffle(v.begin(), v.end(), std::mt19937(4));
  EXPECT_EQ(percentile(v, 0.95), 95u);
  EXPECT_EQ(percentile(v, 0.5), 50u);
  EXPECT_EQ(percentile(v, 1.0), 100u);
}

TEST(Percentile, MatchesBruteForce) {
  std::mt19937 rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint64_t> v(1 + rng() % 300);
    for (auto& x : v) x = rng() % 1000;
    for (double q : {0.01, 0.25, 0.5, 0.9, 0.95, 0.99, 0.999, 1.0}) ASSERT_EQ(percentile(v, q), brute_percentile(v, q));
  }
}

TEST(Percentile, ConstantAndErrors) {
  std::vector<std::uint64_t> v(37, 42);
  for (double q : {0.1, 0.5, 0.99, 1.0}) EXPECT_EQ(percentile(v, q), 42u);
  std::vector<std::uint64_t> none;
  try {
    percentile(none, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Empty);
  }
  EXPECT_THROW(percentile(v, 0.0), Error);
  EXPECT_THROW(percentile(v, 1.5), Error);
}

TEST(Stats, Ordering) {
  std::mt19937 rng(1);
  std::vector<std::uint64_t> v(1000);
  for (auto& x : v) x = rng() % 100000;
  auto s = compute_stats(v);
  EXPECT_LE(s.p50_ns, s.p95_ns);
  EXPECT_LE(s.p95_ns, s.p99_ns);
  EXPECT_LE(s.p99_ns, s.p999_ns);
  EXPECT_GE(s.mean_ns, double(s.min_ns));
  EXPECT_LE(s.mean_ns, double(s.max_ns));
}

TEST(Report, JsonKeysInOrder) {
  auto j = to_json(compute_stats({1, 2, 3}, 1));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"count", "mean_ns", "p50_ns", "p95_ns", "p99_ns", "p999_ns", "drops"}));
}

TEST(Report, CsvHeaderAndFile) {
  auto dir = std::filesystem::temp_directory_path() / "cvmio_bench_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "r.csv").string();
  emit_report(compute_stats({5, 5}), ReportFormat::Csv, path);
  auto text = slurp(path);
  EXPECT_EQ(text.substr(0, text.find('\n')), "count,mean_ns,p50_ns,p95_ns,p99_ns,p999_ns,drops");
  EXPECT_EQ(text.substr(text.find('\n') + 1), "2,5.0,5,5,5,5,0\n");
  std::filesystem::remove_all(dir);
}

TEST(Report, UnwritablePath) {
  try {
    emit_report(compute_stats({1}), ReportFormat::Json, "/nonexistent-dir/x/report.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IoError);
  }
}

TEST(Report, FormatNames) {
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::Csv);
  EXPECT_THROW(parse_report_format("xml"), Error);
}

TEST(MaxConnections, Formula) {
  EXPECT_EQ(max_connections(8e9, 1000, 1000), 1000u);
  EXPECT_EQ(max_connections(8e9, 100, 1000), 10000u);
  EXPECT_EQ(max_connections(8e9, 200, 1000), 5000u);
  EXPECT_EQ(max_connections(8e9, 500, 1000), 2000u);
  try {
    max_connections(8e9, 0, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroArgument);
  }
}

TEST(Notification, Parse) {
  EXPECT_EQ(Notification::parse("polling").kind, NotificationKind::Polling);
  auto n = Notification::parse("interrupt:500");
  EXPECT_EQ(n.kind, NotificationKind::EmulatedInterrupt);
  EXPECT_EQ(n.exit_cost_ns, 500u);
  for (const char* bad : {"interrupt:", "interrupt:-1", "irq", "interrupt:5x"}) EXPECT_THROW(Notification::parse(bad), Error);
}

TEST(Config, Validation) {
  BenchConfig c;
  c.payload = 4;
  EXPECT_THROW(c.validate(), Error);
  c = BenchConfig{};
  c.ipsec = OffloadMode::LookAside;
  c.payload = c.data_room() - kEspOverhead;
  EXPECT_NO_THROW(c.validate());
  c.payload += 1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Echo, PollingRttIsTwoLinkDelays) {
  auto r = run_echo(plain_echo());
  EXPECT_EQ(r.requests, 500u);
  ASSERT_EQ(r.answered, 500u);
  for (auto x : r.rtts) ASSERT_EQ(x, 2000u);
  EXPECT_EQ(r.stats.p99_ns, 2000u);
  EXPECT_DOUBLE_EQ(r.stats.mean_ns, 2000.0);
  EXPECT_EQ(r.exits, 0u);
}

// The exit count per packet is read from the run itself, then every RTT must
// equal the closed form.
TEST(Echo, InterruptAddsExitCost) {
  BenchConfig c = plain_echo();
  c.notification = Notification::parse("interrupt:500");
  auto r = run_echo(c);
  ASSERT_EQ(r.answered, r.requests);
  ASSERT_EQ(r.exits % r.requests, 0u);
  std::uint64_t k = r.exits / r.requests;
  EXPECT_GE(k, 1u);
  for (auto x : r.rtts) ASSERT_EQ(x, 2000 + k * 500);
}

TEST(Echo, PollingBeatsInterruptEveryPacket) {
  for (std::uint64_t cost : {1u, 50u, 500u, 7061u}) {
    BenchConfig p = plain_echo();
    p.profile = fitted_profile();
    p.link.jitter_ns = 300;
    BenchConfig i = p;
    i.notification = {NotificationKind::EmulatedInterrupt, cost};
    auto a = run_echo(p), b = run_echo(i);
    ASSERT_EQ(a.rtts.size(), b.rtts.size());
    for (std::size_t n = 0; n < a.rtts.size(); ++n) ASSERT_LT(a.rtts[n], b.rtts[n]);
    EXPECT_LT(a.stats.p50_ns, b.stats.p50_ns);
    EXPECT_LT(a.stats.p99_ns, b.stats.p99_ns);
    EXPECT_LT(a.stats.p999_ns, b.stats.p999_ns);
  }
}

// Unanswered requests equal the losses an independent replay of both link
// generators predicts.
TEST(Echo, LossMatchesGeneratorReplay) {
  BenchConfig c = plain_echo();
  c.link.loss_rate = 0.5;
  c.seed = 77;
  auto r = run_echo(c);
  Xoshiro256 fwd(77), back(77 ^ 0x9e3779b97f4a7c15ull);
  std::uint64_t lost = 0;
  for (std::uint64_t i = 0; i < r.requests; ++i) {
    bool drop = fwd.uniform01() < 0.5;
    (void)fwd.uniform_to(0);
    if (drop) {
      ++lost;
      continue;
    }
    bool drop_back = back.uniform01() < 0.5;
    (void)back.uniform_to(0);
    lost += drop_back;
  }
  EXPECT_EQ(r.stats.drops, lost);
  EXPECT_EQ(r.link_lost, lost);
  EXPECT_EQ(run_echo(c).rtts, r.rtts);
}

TEST(Echo, DeterministicReports) {
  BenchConfig c;
  c.link.jitter_ns = 800;
  c.link.loss_rate = 0.01;
  c.connections = 4;
  c.duration_s = 0.05;
  auto a = format_report(run_echo(c).stats, ReportFormat::Json);
  auto b = format_report(run_echo(c).stats, ReportFormat::Json);
  EXPECT_EQ(a, b);
}

TEST(Echo, CopyCostUnderTwoPercent) {
  for (std::uint32_t payload : {64u, 512u, 1500u}) {
    BenchConfig c;
    c.payload = payload;
    c.duration_s = 0.05;
    BenchConfig n = c;
    n.copy = CopyModel::NoCopy;
    double with = run_echo(c).stats.mean_ns, without = run_echo(n).stats.mean_ns;
    EXPECT_GT(with, without);
    EXPECT_LT((with - without) / with, 0.02) << payload;
  }
}

TEST(Echo, HandshakeDeliversData) {
  BenchConfig c = plain_echo();
  c.workload = Workload::TcpLikeLoad;
  auto r = run_echo(c);
  EXPECT_EQ(r.answered, r.requests);
  EXPECT_EQ(r.server_delivered, r.requests);
}

TEST(Echo, IpsecModesAnswerEverything) {
  for (auto mode : {OffloadMode::LookAside, OffloadMode::EmulatedInline}) {
    BenchConfig c = plain_echo();
    c.ipsec = mode;
    c.crypto_cost_ns = 300;
    auto r = run_echo(c);
    EXPECT_EQ(r.answered, r.requests);
    EXPECT_EQ(r.server_crypto.decrypted, r.requests);
    EXPECT_EQ(r.server_crypto.auth_fail, 0u);
    if (mode == OffloadMode::EmulatedInline) EXPECT_EQ(r.server_app_aes_ops, 0u);
    else EXPECT_EQ(r.server_app_aes_ops, 2 * r.requests);
  }
}

TEST(Load, ArithmeticAtFullLoad) {
  BenchConfig c;
  c.workload = Workload::UdpLoad;
  c.payload = 1000;
  c.rate = 1000;
  c.connections = 1000;
  auto r = run_load(c);
  EXPECT_EQ(r.max_connections, 1000u);
  EXPECT_FALSE(r.clamped);
  EXPECT_DOUBLE_EQ(r.achieved_bps, 8.0e9);
  EXPECT_DOUBLE_EQ(r.lost_packets, 0.0);
}

TEST(Load, BelowCapacityNoLoss) {
  BenchConfig c;
  c.workload = Workload::UdpLoad;
  c.payload = 200;
  c.rate = 1000;
  c.connections = 300;
  auto r = run_load(c);
  EXPECT_FALSE(r.loss_onset_second);
  EXPECT_DOUBLE_EQ(r.achieved_bps, r.offered_bps);
  EXPECT_DOUBLE_EQ(r.achieved_bps, 300.0 * 1000 * 200 * 8);
}

// Loss begins at the first second in which the ramp offers more than C,
// computed directly from the ramp arithmetic.
TEST(Load, LossOnsetAtCapacity) {
  BenchConfig c;
  c.workload = Workload::UdpLoad;
  c.payload = 100;
  c.rate = 1000;
  c.connections = 10000;
  c.capacity_pps = 2.345e6;
  auto r = run_load(c);
  std::uint64_t step = 500;  // 5% of 10000
  std::uint64_t expect_s = 0;
  while (double(step * (expect_s + 1)) * 1000 <= c.capacity_pps) ++expect_s;
  ASSERT_TRUE(r.loss_onset_second);
  EXPECT_EQ(*r.loss_onset_second, expect_s);
  EXPECT_EQ(*r.loss_onset_connections, step * (expect_s + 1));
}

TEST(Load, ClampToFormula) {
  BenchConfig c;
  c.workload = Workload::UdpLoad;
  c.payload = 1000;
  c.rate = 1000;
  c.connections = 20000;
  auto r = run_load(c);
  EXPECT_TRUE(r.clamped);
  EXPECT_EQ(r.connections, 1000u);
}

TEST(Load, IpsecNeverFaster) {
  BenchConfig u;
  u.workload = Workload::UdpLoad;
  u.payload = 500;
  u.rate = 1000;
  u.connections = 2000;
  u.capacity_pps = 1.5e6;
  BenchConfig s = u;
  s.workload = Workload::IpsecLoad;
  s.ipsec = OffloadMode::LookAside;
  s.crypto_cost_ns = 0;
  EXPECT_DOUBLE_EQ(run_load(s).achieved_bps, run_load(u).achieved_bps);
  for (double k : {1.0, 50.0, 300.0}) {
    s.crypto_cost_ns = k;
    EXPECT_LT(run_load(s).achieved_bps, run_load(u).achieved_bps) << k;
  }
}

TEST(Load, WallClockRejected) {
  BenchConfig c;
  c.workload = Workload::UdpLoad;
  c.time = TimeMode::WallClock;
  EXPECT_THROW(run_load(c), Error);
}

TEST(Load, ReportFormats) {
  BenchConfig c;
  c.workload = Workload::UdpLoad;
  c.connections = 10;
  auto r = run_load(c);
  auto j = nlohmann::json::parse(format_load_report(r, ReportFormat::Json));
  EXPECT_EQ(j["connections"], 10);
  auto csv = format_load_report(r, ReportFormat::Csv);
  EXPECT_EQ(csv.substr(0, csv.find(',')), "requested_connections");
}

TEST(Sweep, InlineSustainsMoreAppWork) {
  BenchConfig c;
  c.rate = 5000;
  c.crypto_cost_ns = 20000;
  c.handoff_ns = 100;
  c.ipsec = OffloadMode::LookAside;
  auto look = saturation_sweep(c, 10000, 200);
  c.ipsec = OffloadMode::EmulatedInline;
  auto inl = saturation_sweep(c, 10000, 200);
  EXPECT_GT(inl.c_max_ns, look.c_max_ns);
}
