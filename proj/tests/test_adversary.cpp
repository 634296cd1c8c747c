#include <gtest/gtest.h>

#include "cvmio/adversary.hpp"

using namespace cvmio;

namespace {

ViolationReport run_text(const std::string& text, std::uint64_t seed = 3) {
  return run_adversary(AdversaryPlan::parse(text), seed);
}

}  // namespace

TEST(PlanParse, AllActions) {
  auto p = AdversaryPlan::parse(
      "# sample\n"
      "ipsec on\n"
      "tamper_shared post 12 deadbeef\n"
      "forge_writeback next length=65535 rss=7\n"
      "forge_address server 4096 64\n"
      "replay_descriptor 3\n"
      "drop_packet 2\n"
      "corrupt_ciphertext 20\n");
  EXPECT_TRUE(p.ipsec);
  ASSERT_EQ(p.actions.size(), 6u);
  EXPECT_EQ(p.actions[0].kind, ActionKind::TamperShared);
  EXPECT_TRUE(p.actions[0].post_copy);
  EXPECT_EQ(p.actions[0].bytes, (std::vector<std::uint8_t>{0xde, 0xad, 0xbe, 0xef}));
  EXPECT_FALSE(p.actions[1].slot);
  EXPECT_EQ(p.actions[1].fields.length, 65535);
  EXPECT_EQ(p.actions[1].fields.rss, 7u);
  EXPECT_TRUE(p.actions[2].target_server);
  EXPECT_EQ(p.actions[3].slot, 3u);
  EXPECT_EQ(p.actions[4].count, 2u);
  EXPECT_EQ(p.actions[5].offset, 20u);
}

TEST(PlanParse, RoundTrip) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto p = random_plan(s);
    auto q = AdversaryPlan::parse(p.str());
    EXPECT_EQ(q.str(), p.str());
  }
}

TEST(PlanParse, ErrorsNameTheLine) {
  for (const char* bad : {"ipsec maybe", "tamper_shared during 1 00", "forge_writeback next length=70000",
                          "forge_address host 1 1", "forge_address server 1 0", "replay_descriptor", "warp 9",
                          "drop_packet -1", "tamper_shared pre 1 zz"}) {
    try {
      AdversaryPlan::parse(std::string("ipsec off\n") + bad + "\n");
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ParseError) << bad;
      EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(AdversaryPlan::load("/nonexistent/plan.txt"), Error);
}

TEST(Adversary, PostCopyTamperHasNoEffect) {
  auto r = run_text("tamper_shared post 0 ffffffffffffffff\n");
  ASSERT_TRUE(r.ok()) << r.violations.front();
  EXPECT_EQ(r.results.at(0).outcome, Outcome::NoEffect);
}

TEST(Adversary, ForgedLengthRejected) {
  auto r = run_text("forge_writeback next length=65535\n");
  ASSERT_TRUE(r.ok()) << r.violations.front();
  EXPECT_EQ(r.results.at(0).outcome, Outcome::Rejected);
  EXPECT_GE(r.metadata_suspect, 1u);
}

TEST(Adversary, ForgedAddressDenied) {
  for (const char* t : {"forge_address server 0 64\n", "forge_address client 8192 2048\n"}) {
    auto r = run_text(t);
    ASSERT_TRUE(r.ok()) << r.violations.front();
    EXPECT_EQ(r.results.at(0).outcome, Outcome::Rejected);
    EXPECT_GE(r.denied, 1u);
  }
}

TEST(Adversary, ReplayRejected) {
  auto r = run_text("replay_descriptor 0\n");
  ASSERT_TRUE(r.ok()) << r.violations.front();
  EXPECT_EQ(r.results.at(0).outcome, Outcome::Rejected);
}

TEST(Adversary, CorruptionCaughtByIpsec) {
  auto r = run_text("ipsec on\ncorrupt_ciphertext 5\n");
  ASSERT_TRUE(r.ok()) << r.violations.front();
  EXPECT_GE(r.auth_fail, 1u);
}

TEST(Adversary, PreCopyTamperWithoutIpsecReachesApp) {
  auto r = run_text("ipsec off\ntamper_shared pre 20 a5a5a5a5\n");
  ASSERT_TRUE(r.ok()) << r.violations.front();
  EXPECT_EQ(r.results.at(0).outcome, Outcome::DeliveredCorrupted);
}

TEST(Adversary, DropIsNotAViolation) {
  auto r = run_text("drop_packet 3\n");
  EXPECT_TRUE(r.ok());
}

TEST(Adversary, ReportJson) {
  auto r = run_text("ipsec on\ndrop_packet 1\nforge_address server 0 8\n");
  auto j = r.to_json();
  EXPECT_TRUE(j["ok"].get<bool>());
  EXPECT_EQ(j["actions"].size(), 2u);
  EXPECT_EQ(j["actions"][1]["outcome"], "rejected");
}

TEST(Adversary, SmallRandomSuite) {
  auto s = run_adversary_suite(100, 42);
  EXPECT_EQ(s.plans, 100u);
  EXPECT_EQ(s.failed, 0u) << (s.first_failures.empty() ? "" : s.first_failures.front());
  EXPECT_EQ(s.kinds.size(), 6u);
}

TEST(Adversary, Deterministic) {
  auto p = random_plan(9);
  EXPECT_EQ(run_adversary(p, 5).to_json().dump(), run_adversary(p, 5).to_json().dump());
}
