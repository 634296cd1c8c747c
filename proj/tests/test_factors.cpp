#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "cvmio/factors.hpp"

using namespace cvmio;

namespace {

// Second transcription of the factor table, written as text rows in the
// order of the printed table, columns left to right.
const char* kRows[] = {
    "Y  Y  N  Y  Y  Y  Y  N  N  N",
    "Y  N  N  Y  N  N  N  N  N  N",
    "Y  Y  N  Y  Y  Y  Y  Y  N  N",
    "Y  Y  Y  Y  Y  Y  Y  Y  Y  Y",
    "Y  Y  Y  Y  Y  Y  Y  Y  Y  Y",
    "Y  Y  N+ Y  Y  Y  Y  Y  N+ N+",
    "N  N  N  Y  Y  Y  Y  N  N  N",
    "N  N  N  Y  Y  Y  Y  N  N  Y",
    "N  N  N  N  N  Y  N  N  N  N",
    "N  N  N  N  N  Y  Y  Y  N* N*",
    "N- N- N- N- N- N- Y  Y  Y  Y",
    "N  N  N  N  N  N  Y  Y  N+ N+",
    "N  N  N  N  N  N  N  Y  Y  N",
};

FactorState parse_cell(const std::string& s) {
  if (s == "Y") return FactorState::Present;
  if (s == "N") return FactorState::Absent;
  if (s == "N+") return FactorState::AbsentMinimized;
  if (s == "N-") return FactorState::AbsentWriteOnly;
  if (s == "N*") return FactorState::AbsentVcMinimized;
  throw std::runtime_error("bad cell " + s);
}

}  // namespace

TEST(Factors, MatrixMatchesSecondTranscription) {
  const auto& m = factor_matrix();
  for (std::size_t r = 0; r < kFactorCount; ++r) {
    std::istringstream in(kRows[r]);
    std::string cell;
    std::size_t c = 0;
    while (in >> cell) {
      ASSERT_LT(c, kConfigCount);
      EXPECT_EQ(m[r][c], parse_cell(cell)) << to_string(kAllFactors[r]) << " / " << to_string(kAllConfigs[c]);
      ++c;
    }
    EXPECT_EQ(c, kConfigCount);
  }
}

TEST(Factors, SpotCells) {
  EXPECT_EQ(factor_state(OverheadFactor::BounceBufferCopy, VmConfiguration::SnpShadowPool), FactorState::Present);
  EXPECT_EQ(factor_state(OverheadFactor::BounceBufferCopy, VmConfiguration::SnpTioDpdk), FactorState::Absent);
  EXPECT_EQ(factor_state(OverheadFactor::RoutingWithinHost, VmConfiguration::VmSriov), FactorState::Absent);
  EXPECT_TRUE(is_projected_optimal(VmConfiguration::SnpTioDpdk));
}

TEST(Factors, Classes) {
  for (auto f : kAllFactors) {
    bool common = f == OverheadFactor::RoutingWithinVm || f == OverheadFactor::RoutingWithinHost ||
                  f == OverheadFactor::EmulatedIoInterrupt || f == OverheadFactor::OtherFactors;
    EXPECT_EQ(factor_class(f), common ? FactorClass::Common : FactorClass::SevOnly);
  }
}

TEST(Factors, OtherFactorsAlwaysPresent) {
  for (auto c : kAllConfigs) EXPECT_EQ(factor_state(OverheadFactor::OtherFactors, c), FactorState::Present);
}

TEST(Diff, ShadowPoolVersusOptimal) {
  EXPECT_EQ(diff_configs(VmConfiguration::SnpShadowPool, VmConfiguration::SnpTioDpdk),
            (std::vector<OverheadFactor>{OverheadFactor::BounceBufferCopy, OverheadFactor::IoPcieEncryption}));
}

TEST(Diff, SriovVersusSevSriov) {
  EXPECT_EQ(diff_configs(VmConfiguration::VmSriov, VmConfiguration::SevSriov),
            (std::vector<OverheadFactor>{OverheadFactor::BounceBufferAllocation, OverheadFactor::BounceBufferCopy}));
}

TEST(Diff, SameConfigRejected) {
  try {
    diff_configs(VmConfiguration::SevVm, VmConfiguration::SevVm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SameConfig);
  }
}

TEST(Diff, SymmetricAndNonEmpty) {
  for (auto a : kAllConfigs)
    for (auto b : kAllConfigs) {
      if (a == b) continue;
      auto x = diff_configs(a, b), y = diff_configs(b, a);
      EXPECT_EQ(x, y);
      EXPECT_FALSE(x.empty()) << to_string(a) << " " << to_string(b);
    }
}

TEST(Standardize, Examples) {
  std::map<VmConfiguration, LatencyRow> rows{
      {VmConfiguration::VmSriov, {75.1, 75.3, 83.8, 123.6}},
      {VmConfiguration::EsSriov, {87.9, 88.0, 90.0, 100.0}},
      {VmConfiguration::SnpSriov, {80.0, 80.0, 90.0, 270.7}},
  };
  auto s = standardize(rows, VmConfiguration::VmSriov);
  EXPECT_DOUBLE_EQ(round2(s[VmConfiguration::EsSriov].mean), 1.17);
  EXPECT_DOUBLE_EQ(round2(s[VmConfiguration::SnpSriov].p99), 2.19);
  EXPECT_EQ(s[VmConfiguration::VmSriov], (LatencyRow{1, 1, 1, 1}));
}

TEST(Standardize, Errors) {
  std::map<VmConfiguration, LatencyRow> rows{{VmConfiguration::EsSriov, {1, 1, 1, 1}}};
  try {
    standardize(rows, VmConfiguration::VmSriov);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingBaseline);
  }
  rows[VmConfiguration::VmSriov] = {1, 0, 1, 1};
  try {
    standardize(rows, VmConfiguration::VmSriov);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroBaseline);
  }
}

TEST(Standardize, ScaleInvariant) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> d(1.0, 500.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<VmConfiguration, LatencyRow> rows, scaled;
    double lambda = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
    for (auto c : kAllConfigs) {
      LatencyRow r{d(rng), d(rng), d(rng), d(rng)};
      rows[c] = r;
      scaled[c] = {r.mean * lambda, r.median * lambda, r.p95 * lambda, r.p99 * lambda};
    }
    auto a = standardize(rows, VmConfiguration::VmSriov), b = standardize(scaled, VmConfiguration::VmSriov);
    for (auto c : kAllConfigs) {
      EXPECT_NEAR(a[c].mean, b[c].mean, 1e-12);
      EXPECT_NEAR(a[c].p99, b[c].p99, 1e-12);
    }
  }
}

TEST(Published, CellsAsPrinted) {
  auto es = published_latency(VmConfiguration::EsSriov);
  ASSERT_TRUE(es);
  EXPECT_EQ(es->mean, LatencyCell::exactly(1.17));
  auto snp = published_latency(VmConfiguration::SnpSriov);
  EXPECT_EQ(snp->p95, LatencyCell::exactly(1.18));
  EXPECT_EQ(snp->p99, LatencyCell::exactly(2.19));
  EXPECT_EQ(published_latency(VmConfiguration::NonTeeVm)->mean, LatencyCell::greater_than(50.0));
  EXPECT_EQ(published_latency(VmConfiguration::SevVm)->p99, LatencyCell::greater_than(50.0));
  EXPECT_FALSE(published_latency(VmConfiguration::SnpTio));
  EXPECT_FALSE(published_latency(VmConfiguration::SnpTioDpdk));
  EXPECT_FALSE(published_latency(VmConfiguration::SnpShadowPool));
  EXPECT_DOUBLE_EQ(kBaselineLatencyUs.mean, 75.1);
}

TEST(Predict, Additive) {
  EXPECT_DOUBLE_EQ(predict_latency(VmConfiguration::SnpSriov, std::map<OverheadFactor, double>{}, 70.0), 70.0);
  // BounceBufferCopy is the only factor present here from this set.
  EXPECT_DOUBLE_EQ(predict_latency(VmConfiguration::SevSriov, {{OverheadFactor::BounceBufferCopy, 5.0}}, 70.0), 75.0);
  EXPECT_DOUBLE_EQ(predict_latency(VmConfiguration::VmSriov, {{OverheadFactor::BounceBufferCopy, 5.0}}, 70.0), 70.0);
  EXPECT_DOUBLE_EQ(predict_latency(VmConfiguration::VmSriov, {{OverheadFactor::OtherFactors, 5.0}}, 70.0), 70.0);
  EXPECT_THROW(predict_latency(VmConfiguration::VmSriov, {{OverheadFactor::TlbCheck, -1.0}}, 70.0), Error);
  auto z = zero_profile();
  for (auto c : kAllConfigs) EXPECT_EQ(predict_latency(c, z), 0.0);
}

// The fitted profile re-predicts every measured mean within 15% of the
// baseline and keeps the unbounded columns beyond 50x.
TEST(Predict, FittedProfileConsistency) {
  auto p = fitted_profile();
  double base = predict_latency(kLatencyBaseline, p);
  for (auto c : kAllConfigs) {
    auto pub = published_latency(c);
    if (!pub) continue;
    double ratio = predict_latency(c, p) / base;
    if (pub->mean.lower_bound) EXPECT_GT(ratio, pub->mean.value) << to_string(c);
    else EXPECT_LT(std::abs(ratio - pub->mean.value), 0.15) << to_string(c);
  }
  for (auto f : kAllFactors) EXPECT_GE(p[f], 0.0);
}

TEST(Report, JsonShape) {
  auto j = factors_report_json(fitted_profile());
  EXPECT_EQ(j["configurations"].size(), kConfigCount);
  EXPECT_EQ(j["matrix"].size(), kFactorCount);
  EXPECT_EQ(j["matrix"]["bounce_buffer_copy"][std::string(to_string(VmConfiguration::SnpShadowPool))], "Y");
  EXPECT_EQ(j["standardized_latency"][std::string(to_string(VmConfiguration::NonTeeVm))]["mean"], ">50.0");
  EXPECT_EQ(j["projected_optimal"], std::string(to_string(VmConfiguration::SnpTioDpdk)));
}

TEST(Report, TextHasEveryRow) {
  auto t = factors_report_text(fitted_profile());
  for (auto f : kAllFactors) EXPECT_NE(t.find(std::string(to_string(f))), std::string::npos);
  EXPECT_NE(t.find(">50.00x"), std::string::npos);
  EXPECT_NE(t.find("2.19x"), std::string::npos);
}

TEST(Report, ParseConfigName) {
  for (auto c : kAllConfigs) EXPECT_EQ(parse_vm_configuration(to_string(c)), c);
  EXPECT_THROW(parse_vm_configuration("bogus"), Error);
}
