#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "chameleon/checkpoint_io.hpp"
#include "chameleon/netmodel.hpp"
#include "nets.hpp"

using namespace chameleon;
using namespace chameleon::net;

namespace {

bool has_constraint(const std::vector<Violation>& v, const std::string& c) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.constraint == c; });
}

NetworkConfig tcn(int blocks, int k, int channels = 4) {
  TcnShape s;
  s.channels = channels;
  s.blocks = blocks;
  s.kernel_size = k;
  return make_tcn(s);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("chameleon_netmodel_" + name);
}

}  // namespace

TEST(ReceptiveField, HandComputed) {
  EXPECT_EQ(receptive_field(tcn(1, 2)), 3);
  EXPECT_EQ(receptive_field(tcn(3, 2)), 15);
  EXPECT_EQ(receptive_field(tcn(3, 3)), 1 + 2 * 2 * (1 + 2 + 4));
  EXPECT_GE(receptive_field(presets::raw_audio_kws()), 16000);
}

TEST(ReceptiveField, MixedKernelsRejected) {
  auto c = tcn(2, 2);
  c.blocks[1].conv1.kernel_size = 3;
  EXPECT_THROW(receptive_field(c), std::invalid_argument);
}

TEST(Validate, Examples) {
  EXPECT_TRUE(has_constraint(validate(NetworkConfig{}), "structure"));
  EXPECT_EQ(validate(NetworkConfig{}).front().message, "no blocks");
  EXPECT_TRUE(validate(presets::omniglot()).empty());
  EXPECT_EQ(presets::omniglot().num_conv_layers(), 14);

  TcnShape big;
  big.channels = 38;
  big.blocks = 7;
  big.kernel_size = 8;
  const auto cfg = make_tcn(big);
  ASSERT_GT(weight_count(cfg), 133000);
  ASSERT_LT(weight_count(cfg), 170000);
  EXPECT_TRUE(has_constraint(validate(cfg), "weights"));
}

TEST(Validate, AllPresetsValid) {
  for (const auto& name : presets::names()) {
    auto cfg = presets::by_name(name);
    ASSERT_TRUE(cfg) << name;
    EXPECT_TRUE(validate(*cfg).empty()) << name;
  }
  EXPECT_FALSE(presets::by_name("nope"));
}

TEST(Validate, StructuralViolations) {
  auto c = tcn(2, 2);
  c.blocks[1].conv1.dilation = 3;
  EXPECT_TRUE(has_constraint(validate(c), "dilation"));
  c = tcn(2, 2);
  c.blocks[0].conv2->in_channels = 5;
  EXPECT_TRUE(has_constraint(validate(c), "channels"));
}

TEST(Checkpoint, GeneratedIsValidAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = testnets::random_net(seed);
    EXPECT_TRUE(validate_checkpoint(r.ckpt).empty());
    EXPECT_EQ(generate_checkpoint(r.ckpt.config, seed), generate_checkpoint(r.ckpt.config, seed));
  }
  const auto cfg = presets::small_fixture();
  EXPECT_NE(encode_binary(generate_checkpoint(cfg, 1)), encode_binary(generate_checkpoint(cfg, 2)));
}

TEST(Checkpoint, BinaryAndTextRoundTrip) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto ck = testnets::random_net(seed).ckpt;
    const auto bytes = encode_binary(ck);
    EXPECT_EQ(decode_binary(bytes), ck);
    EXPECT_EQ(encode_binary(decode_binary(bytes)), bytes);
    const auto text = encode_text(ck);
    EXPECT_EQ(decode_text(text), ck);
    EXPECT_EQ(encode_text(decode_text(text)), text);
  }
}

TEST(Checkpoint, SaveLoadThroughFiles) {
  const auto ck = generate_checkpoint(presets::small_fixture(), 5);
  const auto b = temp_path("rt.bin"), t = temp_path("rt.txt");
  save_checkpoint(ck, b, CheckpointFormat::binary);
  save_checkpoint(ck, t, CheckpointFormat::text);
  EXPECT_EQ(load_checkpoint(b), ck);
  EXPECT_EQ(load_checkpoint(t), ck);
  std::filesystem::remove(b);
  std::filesystem::remove(t);
  EXPECT_THROW(load_checkpoint(temp_path("missing.bin")), std::runtime_error);
}

TEST(Checkpoint, EveryBinaryTruncationIsAParseError) {
  const auto bytes = encode_binary(generate_checkpoint(presets::small_fixture(), 0));
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_THROW(decode_binary(cut), ParseError) << len;
  }
}

TEST(Checkpoint, CorruptedBinaryRejected) {
  auto bytes = encode_binary(generate_checkpoint(presets::small_fixture(), 0));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_binary(flipped), ParseError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_binary(bad_magic), ParseError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_binary(trailing), ParseError);
}

TEST(Checkpoint, TruncatedTextIsAParseError) {
  const auto text = encode_text(generate_checkpoint(presets::small_fixture(), 0));
  const auto cut = text.substr(0, text.rfind("end"));
  EXPECT_THROW(decode_text(cut), ParseError);
  EXPECT_THROW(decode_text(text.substr(0, text.size() / 2)), ParseError);
}

TEST(Checkpoint, InvalidWeightCodeNamesTheLayer) {
  auto text = encode_text(generate_checkpoint(presets::small_fixture(), 0));
  const auto pos = text.find("layer 2 weights ");
  ASSERT_NE(pos, std::string::npos);
  text[pos + std::string("layer 2 weights ").size()] = 'z';
  try {
    decode_text(text);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    ASSERT_FALSE(e.violations().empty());
    EXPECT_EQ(e.violations().front().constraint, "weight_code");
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, ShapeMismatchIsAValidationError) {
  auto ck = generate_checkpoint(presets::small_fixture(), 0);
  ck.conv[1].bias.pop_back();
  EXPECT_FALSE(validate_checkpoint(ck).empty());
  EXPECT_THROW(encode_binary(ck), ValidationError);
}

TEST(Checkpoint, HexCodes) {
  const auto codes = codes_from_hex("08f1");
  ASSERT_EQ(codes.size(), 4u);
  EXPECT_TRUE(codes[1].is_zero());
  EXPECT_EQ(decode_log_weight(codes[2]), -128);
  EXPECT_EQ(codes_to_hex(codes), "08f1");
}
