#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvmio/error.hpp"

namespace cvmio {

/// Nearest-rank percentile over already sorted samples: sorted[ceil(q*n) - 1].
inline std::uint64_t percentile_sorted(std::span<const std::uint64_t> sorted, double q) {
  if (sorted.empty()) throw Error(Errc::Empty, "percentile of no samples");
  if (!(q > 0.0 && q <= 1.0)) throw Error(Errc::BadQuantile, std::to_string(q));
  double x = q * static_cast<double>(sorted.size());
  // q is usually a short decimal like 0.999 that doubles cannot hold exactly;
  // the relative nudge keeps q*n == k from rounding up to k+1.
  auto rank = static_cast<std::size_t>(std::ceil(x * (1.0 - 1e-12)));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

inline std::uint64_t percentile(std::span<const std::uint64_t> samples, double q) {
  std::vector<std::uint64_t> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  return percentile_sorted(s, q);
}

struct LatencyStats {
  std::uint64_t count = 0;
  double mean_ns = 0.0;
  std::uint64_t p50_ns = 0;
  std::uint64_t p95_ns = 0;
  std::uint64_t p99_ns = 0;
  std::uint64_t p999_ns = 0;
  std::uint64_t min_ns = 0;
  std::uint64_t max_ns = 0;
  std::uint64_t drops = 0;

  std::uint64_t median_ns() const { return p50_ns; }

  friend bool operator==(const LatencyStats&, const LatencyStats&) = default;
};

/// All-zero statistics (apart from drops) when nothing arrived.
inline LatencyStats compute_stats(std::vector<std::uint64_t> samples, std::uint64_t drops = 0) {
  LatencyStats s;
  s.drops = drops;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  s.count = samples.size();
  long double sum = std::accumulate(samples.begin(), samples.end(), 0.0L);
  s.mean_ns = static_cast<double>(sum / samples.size());
  s.p50_ns = percentile_sorted(samples, 0.5);
  s.p95_ns = percentile_sorted(samples, 0.95);
  s.p99_ns = percentile_sorted(samples, 0.99);
  s.p999_ns = percentile_sorted(samples, 0.999);
  s.min_ns = samples.front();
  s.max_ns = samples.back();
  return s;
}

enum class ReportFormat : std::uint8_t { Text, Json, Csv };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "text") return ReportFormat::Text;
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  throw Error(Errc::ConfigInvalid, "unknown format '" + s + "'");
}

inline constexpr const char* kStatsCsvHeader = "count,mean_ns,p50_ns,p95_ns,p99_ns,p999_ns,drops";

inline nlohmann::ordered_json to_json(const LatencyStats& s) {
  nlohmann::ordered_json j;
  j["count"] = s.count;
  j["mean_ns"] = s.mean_ns;
  j["p50_ns"] = s.p50_ns;
  j["p95_ns"] = s.p95_ns;
  j["p99_ns"] = s.p99_ns;
  j["p999_ns"] = s.p999_ns;
  j["drops"] = s.drops;
  return j;
}

inline std::string format_report(const LatencyStats& s, ReportFormat f) {
  std::ostringstream o;
  switch (f) {
    case ReportFormat::Json:
      o << to_json(s).dump(2) << '\n';
      break;
    case ReportFormat::Csv:
      o << kStatsCsvHeader << '\n'
        << s.count << ',' << nlohmann::json(s.mean_ns).dump() << ',' << s.p50_ns << ',' << s.p95_ns << ','
        << s.p99_ns << ',' << s.p999_ns << ',' << s.drops << '\n';
      break;
    case ReportFormat::Text: {
      auto line = [&](const char* k, const std::string& v) {
        o << k << std::string(10 - std::min<std::size_t>(10, std::char_traits<char>::length(k)), ' ') << v << '\n';
      };
      line("count", std::to_string(s.count));
      line("mean_ns", nlohmann::json(s.mean_ns).dump());
      line("p50_ns", std::to_string(s.p50_ns));
      line("p95_ns", std::to_string(s.p95_ns));
      line("p99_ns", std::to_string(s.p99_ns));
      line("p999_ns", std::to_string(s.p999_ns));
      line("drops", std::to_string(s.drops));
      break;
    }
  }
  return o.str();
}

/// Writes `text` to `path`, or to stdout when path is empty or "-".
inline void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::IoError, "cannot open " + path);
  f << text;
  f.flush();
  if (!f) throw Error(Errc::IoError, "write failed: " + path);
}

inline void emit_report(const LatencyStats& s, ReportFormat f, const std::string& path) {
  write_output(format_report(s, f), path);
}

}  // namespace cvmio
