#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chameleon/checkpoint_io.hpp"
#include "chameleon/cli/app.hpp"
#include "chameleon/cli/episodes.hpp"
#include "chameleon/cli/sequence_io.hpp"
#include "chameleon/oracle.hpp"

using namespace chameleon;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = CHAMELEON_FIXTURE_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result sim(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("chameleon_cli_" + name); }

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  return {};
}

const std::regex kErrorLine(R"(^chameleon-sim: error: (usage|io|parse|validation|capacity|internal): [^\n]+\n$)");

}  // namespace

TEST(CliInfer, GoldenFixture) {
  const auto r = sim({"infer", "--checkpoint", (kFixtures / "small_seed0.bin").string(), "--input",
                      (kFixtures / "small_input.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(kFixtures / "small_infer.golden"));
}

TEST(CliInfer, GoldenAgreesWithOracle) {
  const auto ck = net::load_checkpoint(kFixtures / "small_seed0.bin");
  const auto in = cli::read_sequence(kFixtures / "small_input.txt");
  const auto ref = oracle::dense_forward(ck, in);
  const auto golden = slurp(kFixtures / "small_infer.golden");
  EXPECT_EQ(value_of(golden, "class"), std::to_string(ref.predicted));
  std::string out, scores;
  for (auto v : ref.output) out += (out.empty() ? "" : " ") + std::to_string(v.value());
  for (auto v : ref.logits) scores += (scores.empty() ? "" : " ") + std::to_string(v.value());
  EXPECT_EQ(value_of(golden, "output"), out);
  EXPECT_EQ(value_of(golden, "scores"), scores);
}

TEST(CliInfer, TextAndBinaryCheckpointsAgree) {
  const auto a = sim({"infer", "--checkpoint", (kFixtures / "small_seed0.bin").string(), "--input",
                      (kFixtures / "small_input.txt").string()});
  const auto b = sim({"infer", "--checkpoint", (kFixtures / "small_seed0.txt").string(), "--input",
                      (kFixtures / "small_input.txt").string()});
  EXPECT_EQ(a.out, b.out);
}

TEST(CliInfer, FourByFourModeSameOutputSixteenTimesCycles) {
  const std::vector<std::string> base{"infer", "--checkpoint", (kFixtures / "small_seed0.bin").string(), "--input",
                                      (kFixtures / "small_input.txt").string()};
  auto args4 = base;
  args4.insert(args4.end(), {"--mode", "4x4"});
  const auto a = sim(base), b = sim(args4);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(value_of(a.out, "output"), value_of(b.out, "output"));
  EXPECT_EQ(std::stoull(value_of(b.out, "cycles")), 16 * std::stoull(value_of(a.out, "cycles")));
  EXPECT_EQ(value_of(b.out, "gated_bank_reads"), "0");
}

TEST(CliInfer, JsonAndArtifacts) {
  const auto trace = tmp("trace.txt"), mem = tmp("mem.txt");
  const auto r = sim({"infer", "--checkpoint", (kFixtures / "small_seed0.bin").string(), "--input",
                      (kFixtures / "small_input.txt").string(), "--json", "--trace", trace.string(),
                      "--dump-memory", mem.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.at("class").is_number_integer());
  EXPECT_TRUE(j.at("scores").is_array());
  EXPECT_NE(slurp(trace).find(" L1 "), std::string::npos);
  EXPECT_NE(slurp(mem).find("W b"), std::string::npos);
  fs::remove(trace);
  fs::remove(mem);
}

TEST(CliInfer, MissingFileNamesThePath) {
  const auto r = sim({"infer", "--checkpoint", "/nonexistent/ck.bin", "--input", (kFixtures / "small_input.txt").string()});
  EXPECT_EQ(r.code, static_cast<int>(cli::ExitCode::io));
  EXPECT_TRUE(std::regex_match(r.err, kErrorLine)) << r.err;
  EXPECT_NE(r.err.find("/nonexistent/ck.bin"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
}

TEST(CliInfer, BadInputIsAParseErrorWithLine) {
  const auto in = tmp("bad.txt");
  std::ofstream(in) << "1 2\n3 99\n";
  const auto r = sim({"infer", "--checkpoint", (kFixtures / "small_seed0.bin").string(), "--input", in.string()});
  EXPECT_EQ(r.code, static_cast<int>(cli::ExitCode::parse));
  EXPECT_TRUE(std::regex_match(r.err, kErrorLine)) << r.err;
  EXPECT_NE(r.err.find(":2:"), std::string::npos) << r.err;
  fs::remove(in);
}

TEST(CliInfer, CorruptCheckpointIsAParseError) {
  const auto ck = tmp("corrupt.bin");
  auto bytes = slurp(kFixtures / "small_seed0.bin");
  bytes.resize(bytes.size() - 9);
  std::ofstream(ck, std::ios::binary) << bytes;
  const auto r = sim({"infer", "--checkpoint", ck.string(), "--input", (kFixtures / "small_input.txt").string()});
  EXPECT_EQ(r.code, static_cast<int>(cli::ExitCode::parse));
  EXPECT_TRUE(std::regex_match(r.err, kErrorLine)) << r.err;
  fs::remove(ck);
}

TEST(CliInfer, CapacityErrorInFourByFour) {
  const auto ck = tmp("omni.bin");
  ASSERT_EQ(sim({"gen-fixture", "--preset", "omniglot", "--out", ck.string()}).code, 0);
  const auto in = tmp("omni_in.txt");
  std::ofstream(in) << "1\n2\n3\n";
  const auto r = sim({"infer", "--checkpoint", ck.string(), "--input", in.string(), "--mode", "4x4"});
  EXPECT_EQ(r.code, static_cast<int>(cli::ExitCode::capacity));
  EXPECT_TRUE(std::regex_match(r.err, kErrorLine)) << r.err;
  fs::remove(ck);
  fs::remove(in);
}

TEST(CliUsage, BadFlagsAreUsageErrors) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"frobnicate"}, {"infer"}, {"infer", "--checkpoint", "x", "--input", "y", "--mode", "8x8"},
           {"learn", "--bias-mode", "sometimes"}, {"learn", "--ways", "300"}, {"learn", "--shots", "129"}}) {
    const auto r = sim(args);
    EXPECT_EQ(r.code, static_cast<int>(cli::ExitCode::usage));
    EXPECT_TRUE(std::regex_match(r.err, kErrorLine)) << r.err;
  }
  EXPECT_EQ(sim({"--help"}).code, 0);
}

TEST(CliLearn, SingleWayIsPerfect) {
  const auto r = sim({"learn", "--ways", "1", "--shots", "3", "--queries", "5", "--episodes", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value_of(r.out, "mean_accuracy"), "1.000000");
}

TEST(CliLearn, SeparatedClustersArePerfect) {
  const auto r = sim({"learn", "--ways", "5", "--shots", "1", "--queries", "4", "--episodes", "20", "--margin", "20",
                      "--noise", "0.5", "--seed", "11"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value_of(r.out, "mean_accuracy"), "1.000000");
  EXPECT_EQ(value_of(r.out, "bytes_per_way"), "26");
}

TEST(CliLearn, ThreadsDoNotChangeOutput) {
  const std::vector<std::string> base{"learn", "--ways", "5", "--shots", "4", "--queries", "3", "--episodes", "12", "--seed", "2"};
  auto threaded = base;
  threaded.insert(threaded.end(), {"--threads", "4"});
  EXPECT_EQ(sim(base).out, sim(threaded).out);
}

TEST(CliLearn, ContinualTwoHundredFiftyClasses) {
  const auto ck = tmp("omni_cl.bin");
  ASSERT_EQ(sim({"gen-fixture", "--preset", "omniglot", "--out", ck.string()}).code, 0);
  const auto r = sim({"learn", "--checkpoint", ck.string(), "--continual", "250", "--queries", "1", "--margin", "12"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value_of(r.out, "classes"), "250");
  EXPECT_EQ(value_of(r.out, "bytes_per_way"), "26");
  EXPECT_GE(std::stoll(value_of(r.out, "free_bytes")), 0);
  fs::remove(ck);
}

TEST(CliLearn, EmbeddingFileAndClassExport) {
  const auto emb = tmp("emb.txt"), table = tmp("classes.txt");
  {
    std::ofstream f(emb);
    for (int label = 0; label < 3; ++label)
      for (int i = 0; i < 4; ++i) f << label * 10 << ' ' << label * 5 << ' ' << 15 - label * 5 << ' ' << (i % 2) << '\n';
  }
  const auto r = sim({"learn", "--embeddings", emb.string(), "--ways", "3", "--shots", "2", "--queries", "2",
                      "--export-classes", table.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value_of(r.out, "mean_accuracy"), "1.000000");
  EXPECT_EQ(value_of(r.out, "embedding_dim"), "3");
  EXPECT_EQ(slurp(table).rfind("chameleon-classes 1\n", 0), 0u);
  const auto small = sim({"learn", "--embeddings", emb.string(), "--ways", "4"});
  EXPECT_EQ(small.code, static_cast<int>(cli::ExitCode::validation));
  fs::remove(emb);
  fs::remove(table);
}

TEST(CliLearn, SequencesThroughTheEmbedder) {
  const auto seqs = tmp("seqs.txt");
  {
    std::ofstream f(seqs);
    for (int label = 0; label < 2; ++label)
      for (int s = 0; s < 2; ++s) {
        f << "label " << label << '\n';
        for (int t = 0; t < 16; ++t) f << (label ? 15 : 0) << ' ' << (t + s) % 16 << '\n';
      }
  }
  const auto r = sim({"learn", "--checkpoint", (kFixtures / "small_seed0.bin").string(), "--sequences", seqs.string(),
                      "--ways", "2", "--shots", "1", "--queries", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(value_of(r.out, "embedding_dim"), "3");
  fs::remove(seqs);
}

TEST(CliReport, KeysStableAndJson) {
  const auto a = sim({"report", "--preset", "greedy-example"});
  const auto b = sim({"report", "--preset", "greedy-example"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto j = nlohmann::ordered_json::parse(sim({"report", "--preset", "greedy-example", "--json"}).out);
  std::istringstream in(a.out);
  std::string line;
  auto it = j.begin();
  while (std::getline(in, line)) {
    ASSERT_NE(it, j.end());
    EXPECT_EQ(line.substr(0, line.find(' ')), it.key());
    ++it;
  }
  EXPECT_TRUE(j.contains("mode_4x4.cycles"));
}

TEST(CliReport, RawAudioMemoryRatio) {
  const auto r = sim({"report", "--preset", "raw-audio-kws", "--no-modes"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GE(std::stod(value_of(r.out, "memory_ratio")), 50.0);
  EXPECT_LE(std::stoll(value_of(r.out, "activation_bytes")), 2048);
}

TEST(CliReport, TrivialNetRatioNearOne) {
  const auto r = sim({"report", "--preset", "small", "--n", "1", "--no-modes"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(std::stod(value_of(r.out, "memory_ratio")), 1.0, 0.35);
  EXPECT_NEAR(std::stod(value_of(r.out, "compute_ratio")), 1.0, 1e-9);
}

TEST(CliReport, WritesFiles) {
  const auto out = tmp("report.json"), trace = tmp("rtrace.txt"), map = tmp("map.txt");
  const auto r = sim({"report", "--preset", "small", "--json", "--out", out.string(), "--trace", trace.string(),
                      "--memory-map", map.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_NO_THROW(nlohmann::json::parse(slurp(out)));
  EXPECT_FALSE(slurp(trace).empty());
  EXPECT_FALSE(slurp(map).empty());
  for (const auto& p : {out, trace, map}) fs::remove(p);
}

TEST(CliGenFixture, DeterministicAndMatchesCommittedFixture) {
  const auto a = tmp("gen_a.bin"), b = tmp("gen_b.bin"), t = tmp("gen.txt"), in = tmp("gen_in.txt");
  ASSERT_EQ(sim({"gen-fixture", "--preset", "small", "--seed", "0", "--out", a.string(), "--input-out", in.string()}).code, 0);
  ASSERT_EQ(sim({"gen-fixture", "--preset", "small", "--seed", "0", "--out", b.string()}).code, 0);
  ASSERT_EQ(sim({"gen-fixture", "--preset", "small", "--seed", "0", "--format", "text", "--out", t.string()}).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(slurp(a), slurp(kFixtures / "small_seed0.bin"));
  EXPECT_EQ(slurp(t), slurp(kFixtures / "small_seed0.txt"));
  EXPECT_EQ(slurp(in), slurp(kFixtures / "small_input.txt"));
  EXPECT_TRUE(net::validate_checkpoint(net::load_checkpoint(a)).empty());
  for (const auto& p : {a, b, t, in}) fs::remove(p);
}

TEST(CliGenFixture, ShapeAndInvalidShape) {
  const auto a = tmp("shape.bin");
  ASSERT_EQ(sim({"gen-fixture", "--shape", "2,8,3,3,40,5", "--out", a.string()}).code, 0);
  EXPECT_EQ(net::load_checkpoint(a).config.num_conv_layers(), 6);
  const auto bad = sim({"gen-fixture", "--shape", "1,64,7,16,10", "--out", a.string()});
  EXPECT_EQ(bad.code, static_cast<int>(cli::ExitCode::validation));
  EXPECT_TRUE(std::regex_match(bad.err, kErrorLine)) << bad.err;
  fs::remove(a);
}

TEST(Episodes, SyntheticIsDeterministic) {
  cli::ClusterOptions o;
  const auto a = cli::synthetic_episode({5, 3, 2, 9}, o);
  const auto b = cli::synthetic_episode({5, 3, 2, 9}, o);
  EXPECT_EQ(a.support, b.support);
  EXPECT_EQ(a.queries, b.queries);
  EXPECT_EQ(a.queries.size(), 10u);
  EXPECT_THROW(cli::synthetic_episode({0, 1, 1, 0}, o), std::invalid_argument);
  EXPECT_THROW(cli::synthetic_episode({5, 129, 1, 0}, o), std::invalid_argument);
}

TEST(Episodes, PowerOfTwoSums) {
  cli::ClusterOptions o;
  o.power_of_two_sums = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto ep = cli::synthetic_episode({5, 1 + static_cast<int>(seed % 8), 1, seed}, o);
    for (const auto& cls : ep.support)
      for (int i = 0; i < o.dim; ++i) {
        int s = 0;
        for (const auto& shot : cls) s += shot[static_cast<std::size_t>(i)].value();
        EXPECT_EQ(s & (s - 1), 0) << s;
      }
  }
}

TEST(SequenceIo, RealValuedInput) {
  const auto s = cli::parse_sequence("0.5 1.25\n-3 100\n", "mem", {2, 2});
  EXPECT_EQ(s[0][0].value(), 2);
  EXPECT_EQ(s[0][1].value(), 5);
  EXPECT_EQ(s[1][0].value(), 0);
  EXPECT_EQ(s[1][1].value(), 15);
  EXPECT_THROW(cli::parse_sequence("1 2\n3\n", "mem"), cli::InputError);
  EXPECT_THROW(cli::parse_sequence("# nothing\n", "mem"), cli::InputError);
}
