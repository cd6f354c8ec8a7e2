#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <sstream>

#include "chameleon/cost_model.hpp"
#include "nets.hpp"

using namespace chameleon;

TEST(CompareStrategies, TrivialNetRatioNearOne) {
  const auto r = cost::compare_strategies(testnets::single_conv(1, 1, 2, 1, 1), 1);
  EXPECT_NEAR(r.memory_ratio, 1.0, 1e-9);
  EXPECT_NEAR(r.compute_ratio, 1.0, 1e-9);
  EXPECT_EQ(r.scheduled_events, r.dense_events);
}

TEST(CompareStrategies, RawAudioConfig) {
  const auto cfg = net::presets::raw_audio_kws();
  ASSERT_LE(net::weight_count(cfg), 133000);
  const auto r = cost::compare_strategies(cfg, 16000);
  EXPECT_GE(r.receptive_field, 16000);
  EXPECT_GE(r.memory_ratio, 50.0);
  EXPECT_GE(r.compute_ratio, 5.0);
  EXPECT_LE(r.activation_bytes, 2048);
  EXPECT_LE(r.input_buffer_bytes, 256);
  // Frozen from the scheduler's slot count and the dense counting oracle.
  EXPECT_EQ(r.activation_bytes, 1158);
  EXPECT_EQ(r.input_buffer_bytes, 2);
}

TEST(CompareStrategies, PeakThroughput) {
  const auto r = cost::compare_strategies(net::presets::small_fixture(), 16);
  EXPECT_DOUBLE_EQ(r.peak_ops_16x16, 76.8e9);
  EXPECT_DOUBLE_EQ(r.peak_ops_4x4, 4.8e9);
  EXPECT_EQ(r.cycles_4x4, 16 * r.cycles_16x16);
}

TEST(Report, KeysStableAndJsonMatchesText) {
  const auto a = cost::to_key_value(cost::compare_strategies(net::presets::greedy_example(), 12));
  const auto b = cost::to_key_value(cost::compare_strategies(net::presets::greedy_example(), 12));
  EXPECT_EQ(a, b);
  const auto j = nlohmann::ordered_json::parse(cost::to_json(cost::compare_strategies(net::presets::greedy_example(), 12)));
  std::istringstream in(a);
  std::string key, value;
  auto it = j.begin();
  while (in >> key >> value) {
    ASSERT_NE(it, j.end());
    EXPECT_EQ(it.key(), key);
    EXPECT_TRUE(it.value().is_number()) << key;
    ++it;
  }
  EXPECT_EQ(it, j.end());
  EXPECT_EQ(j.at("scheduled_events").get<int>(), 12);
}

TEST(ModeTradeoff, SmallNetRunsBothModes) {
  const auto r = testnets::random_net(9);
  const auto modes = cost::mode_tradeoff(r.ckpt, r.input);
  ASSERT_EQ(modes.size(), 2u);
  const auto& m4 = modes[0];
  const auto& m16 = modes[1];
  EXPECT_EQ(m4.mode, pe::ArrayMode::m4x4);
  EXPECT_TRUE(m4.fits);
  EXPECT_TRUE(m16.fits);
  EXPECT_EQ(m4.output, m16.output);
  EXPECT_EQ(m4.cycles, 16 * m16.cycles);
  EXPECT_EQ(m4.gated_bank_reads, 0u);
  EXPECT_DOUBLE_EQ(m4.peak_ops_per_s, 4.8e9);
  EXPECT_EQ(m4.powered_banks, 8);
  EXPECT_EQ(m16.powered_banks, 40);
  // Same work in one window: the gated mode keeps fewer banks powered.
  EXPECT_LT(m4.active_bank_window_cycles, m16.active_bank_window_cycles);
}

TEST(ModeTradeoff, OversizedNetReportsCapacity) {
  const auto ck = net::generate_checkpoint(net::presets::omniglot(), 0);
  pe::Sequence in(20, std::vector<quant::QAct>(1, quant::QAct(3)));
  const auto modes = cost::mode_tradeoff(ck, in);
  EXPECT_FALSE(modes[0].fits);
  EXPECT_NE(modes[0].capacity_error.find("4x4"), std::string::npos);
  EXPECT_TRUE(modes[1].fits);
}
