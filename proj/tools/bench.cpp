// bench: echo / load / ipsec workloads over the simulated stack, the factor
// report, and adversary plan replay.
//
// Exit codes: 0 ok, 2 configuration error, 3 invariant violated during an
// adversary run.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cvmio/cvmio.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitViolation = 3;

struct Options {
  std::uint32_t payload = 64;
  double rate = 5000;
  std::uint32_t connections = 1;
  double duration = 1.0;
  std::string notification = "polling";
  std::string copy = "single";
  std::string ipsec;
  std::uint64_t seed = 1;
  std::string time = "sim";
  std::string format = "text";
  std::string out;
  std::string adversary;
  std::string sa_file;
  std::string workload = "udp";
  std::string vm = "snp-shadow-pool";
  std::string profile = "fitted";
  double capacity_pps = 0;
  double bandwidth_bps = 8e9;
  double hold = 30;
  double app_cost = 0;
  double crypto_cost = 0;
  double handoff = 0;
  std::uint64_t link_latency = 1000;
  double per_byte = 0;
  std::uint64_t jitter = 0;
  double loss = 0;
};

cvmio::CostProfile pick_profile(const std::string& name) {
  if (name == "fitted") return cvmio::fitted_profile();
  if (name == "zero") return cvmio::zero_profile();
  throw cvmio::Error(cvmio::Errc::ConfigInvalid, "profile must be fitted or zero");
}

cvmio::BenchConfig build_config(const Options& o, cvmio::Workload w) {
  using namespace cvmio;
  BenchConfig c;
  c.workload = w;
  c.payload = o.payload;
  c.rate = o.rate;
  c.connections = o.connections;
  c.duration_s = o.duration;
  c.notification = Notification::parse(o.notification);
  if (o.copy == "single") c.copy = CopyModel::SingleCopy;
  else if (o.copy == "none") c.copy = CopyModel::NoCopy;
  else throw Error(Errc::ConfigInvalid, "copy must be single or none");
  if (o.ipsec == "lookaside") c.ipsec = OffloadMode::LookAside;
  else if (o.ipsec == "inline") c.ipsec = OffloadMode::EmulatedInline;
  else if (!o.ipsec.empty()) throw Error(Errc::ConfigInvalid, "ipsec must be lookaside or inline");
  c.seed = o.seed;
  if (o.time == "sim") c.time = TimeMode::Deterministic;
  else if (o.time == "wall") c.time = TimeMode::WallClock;
  else throw Error(Errc::ConfigInvalid, "time must be sim or wall");
  c.vm = parse_vm_configuration(o.vm);
  c.profile = pick_profile(o.profile);
  c.capacity_pps = o.capacity_pps;
  c.bandwidth_bps = o.bandwidth_bps;
  c.hold_s = o.hold;
  c.app_cost_ns = o.app_cost;
  c.crypto_cost_ns = o.crypto_cost;
  c.handoff_ns = o.handoff;
  c.link.base_latency_ns = o.link_latency;
  c.link.per_byte_ns = o.per_byte;
  c.link.jitter_ns = o.jitter;
  c.link.loss_rate = o.loss;
  if (!o.sa_file.empty()) {
    auto sas = SaConfig::load(o.sa_file);
    if (sas.empty()) throw Error(Errc::ConfigInvalid, "no SA in " + o.sa_file);
    c.sa = sas.front();
    if (!c.ipsec) c.ipsec = c.sa.mode;
  }
  c.validate();
  return c;
}

int run_adversary_plan(const Options& o, cvmio::ReportFormat f) {
  using namespace cvmio;
  AdversaryPlan plan = AdversaryPlan::load(o.adversary);
  ViolationReport r = run_adversary(plan, o.seed);
  std::string text;
  if (f == ReportFormat::Json) {
    text = r.to_json().dump(2) + "\n";
  } else {
    std::ostringstream s;
    if (f == ReportFormat::Csv) {
      s << "action,outcome,note\n";
      for (const auto& a : r.results) s << '"' << a.action.str() << "\"," << to_string(a.outcome) << ",\"" << a.note << "\"\n";
    } else {
      for (const auto& a : r.results)
        s << to_string(a.outcome) << "  " << a.action.str() << (a.note.empty() ? "" : "  (" + a.note + ")") << '\n';
      for (const auto& v : r.violations) s << "VIOLATION " << v << '\n';
      s << (r.ok() ? "invariants hold" : "invariants violated") << '\n';
    }
    text = s.str();
  }
  write_output(text, o.out);
  return r.ok() ? kExitOk : kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace cvmio;
  CLI::App app{"Workload harness for the shadow-pool packet I/O stack"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with the same keys as the long flags");

  Options o;
  app.add_option("--payload", o.payload, "Bytes per packet");
  app.add_option("--rate", o.rate, "Packets per second per connection");
  app.add_option("--connections", o.connections, "Concurrent connections");
  app.add_option("--duration", o.duration, "Seconds");
  app.add_option("--notification", o.notification, "polling | interrupt:<ns>");
  app.add_option("--copy", o.copy, "single | none");
  app.add_option("--ipsec", o.ipsec, "lookaside | inline");
  app.add_option("--seed", o.seed, "PRNG seed");
  app.add_option("--time", o.time, "sim | wall");
  app.add_option("--format", o.format, "text | json | csv");
  app.add_option("--out", o.out, "Output path (default stdout)");
  app.add_option("--adversary", o.adversary, "Adversary plan file to replay");
  app.add_option("--sa", o.sa_file, "SA file (first entry is used)");
  app.add_option("--workload", o.workload, "load: udp | tcp");
  app.add_option("--vm", o.vm, "VM configuration for the cost model");
  app.add_option("--profile", o.profile, "Cost profile: fitted | zero");
  app.add_option("--capacity-pps", o.capacity_pps, "Server capacity for load runs (0: from bandwidth)");
  app.add_option("--bandwidth-bps", o.bandwidth_bps, "Link bandwidth for the connection formula");
  app.add_option("--hold", o.hold, "Seconds to hold at the target connection count");
  app.add_option("--app-cost", o.app_cost, "Application ns per packet");
  app.add_option("--crypto-cost", o.crypto_cost, "ns per AES operation");
  app.add_option("--handoff", o.handoff, "Inline crypto queue handoff ns");
  app.add_option("--link-latency", o.link_latency, "One-way link latency ns");
  app.add_option("--per-byte", o.per_byte, "Link ns per byte");
  app.add_option("--jitter", o.jitter, "Uniform link jitter bound ns");
  app.add_option("--loss", o.loss, "Link loss probability");

  auto* echo = app.add_subcommand("echo", "UDP echo latency")->fallthrough();
  auto* load = app.add_subcommand("load", "Connection ramp throughput")->fallthrough();
  auto* ipsec = app.add_subcommand("ipsec", "Echo latency with ESP")->fallthrough();
  auto* freport = app.add_subcommand("factors-report", "Overhead factor matrix")->fallthrough();
  auto* factors = app.add_subcommand("factors", "Overhead factor tools")->fallthrough();
  auto* factors_report = factors->add_subcommand("report", "Overhead factor matrix")->fallthrough();
  factors->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    ReportFormat fmt = parse_report_format(o.format);

    if (freport->parsed() || factors_report->parsed()) {
      if (fmt == ReportFormat::Csv) throw Error(Errc::ConfigInvalid, "factors report supports text or json");
      CostProfile p = pick_profile(o.profile);
      write_output(fmt == ReportFormat::Json ? factors_report_json(p).dump(2) + "\n" : factors_report_text(p), o.out);
      return kExitOk;
    }

    if (!o.adversary.empty()) return run_adversary_plan(o, fmt);

    if (echo->parsed()) {
      BenchConfig c = build_config(o, Workload::Echo);
      emit_report(run_echo(c).stats, fmt, o.out);
    } else if (ipsec->parsed()) {
      Options oi = o;
      if (oi.ipsec.empty() && oi.sa_file.empty()) oi.ipsec = "lookaside";
      BenchConfig c = build_config(oi, Workload::Echo);
      emit_report(run_echo(c).stats, fmt, o.out);
    } else if (load->parsed()) {
      Workload w = Workload::UdpLoad;
      if (o.workload == "tcp") w = Workload::TcpLikeLoad;
      else if (o.workload != "udp") throw Error(Errc::ConfigInvalid, "workload must be udp or tcp");
      BenchConfig c = build_config(o, w);
      if (c.ipsec_on() && w == Workload::UdpLoad) c.workload = Workload::IpsecLoad;
      ThroughputReport r = run_load(c);
      if (r.clamped)
        std::cerr << "note: " << r.requested_connections << " connections requested, clamped to formula max "
                  << r.max_connections << '\n';
      write_output(format_load_report(r, fmt), o.out);
    }
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
