#include <gtest/gtest.h>

#include <random>

#include "chameleon/checkpoint_io.hpp"
#include "chameleon/oracle.hpp"
#include "chameleon/proto_learn.hpp"

using namespace chameleon;
using namespace chameleon::proto;
using quant::QAct;

namespace {

std::vector<QAct> acts(std::initializer_list<int> v) {
  std::vector<QAct> r;
  for (int x : v) r.emplace_back(x);
  return r;
}

std::vector<std::vector<QAct>> random_shots(std::mt19937_64& g, int k, int dim) {
  std::vector<std::vector<QAct>> s(static_cast<std::size_t>(k));
  for (auto& e : s)
    for (int i = 0; i < dim; ++i) e.emplace_back(static_cast<int>(g() % 16));
  return s;
}

}  // namespace

TEST(AccumulateShot, ComponentwiseSum) {
  Prototype p;
  p.s.assign(2, quant::Accum(0));
  accumulate_shot(p, acts({2, 4}));
  accumulate_shot(p, acts({6, 0}));
  EXPECT_EQ(p.k, 2);
  EXPECT_EQ(p.s[0].value(), 8);
  EXPECT_EQ(p.s[1].value(), 4);
}

TEST(AccumulateShot, RejectsShot129) {
  Prototype p;
  p.s.assign(1, quant::Accum(0));
  for (int i = 0; i < kMaxShots; ++i) accumulate_shot(p, acts({1}));
  EXPECT_EQ(p.k, 128);
  EXPECT_THROW(accumulate_shot(p, acts({1})), std::out_of_range);
}

TEST(BiasShift, Modes) {
  EXPECT_EQ(bias_shift(1, BiasMode::exact), 1);
  EXPECT_EQ(bias_shift(2, BiasMode::exact), 2);
  EXPECT_EQ(bias_shift(8, BiasMode::exact), 4);
  EXPECT_EQ(bias_shift(128, BiasMode::exact), 8);
  EXPECT_EQ(bias_shift(1, BiasMode::paper_literal), 0);
  EXPECT_EQ(bias_shift(2, BiasMode::paper_literal), 2);
  EXPECT_EQ(bias_shift(5, BiasMode::paper_literal), 6);
  EXPECT_EQ(bias_mode_from_string("paper-literal"), BiasMode::paper_literal);
  EXPECT_THROW(bias_mode_from_string("literal"), std::invalid_argument);
}

TEST(ExtractFcParams, Examples) {
  Prototype p{0, 1, {quant::Accum(2), quant::Accum(4)}};
  const auto e = extract_fc_params(p, BiasMode::exact);
  EXPECT_EQ(e.weights[0], quant::LogWeight::make(false, 1));
  EXPECT_EQ(e.weights[1], quant::LogWeight::make(false, 2));
  EXPECT_EQ(e.bias.value(), 10);

  p.k = 2;
  EXPECT_EQ(extract_fc_params(p, BiasMode::paper_literal).bias.value(), 5);

  Prototype z{0, 3, {quant::Accum(0), quant::Accum(0), quant::Accum(0)}};
  const auto ez = extract_fc_params(z, BiasMode::exact);
  for (auto w : ez.weights) EXPECT_TRUE(w.is_zero());
  EXPECT_EQ(ez.bias.value(), 0);
}

TEST(ExtractFcParams, NoMultiplies) {
  std::mt19937_64 g(5);
  audit::Scope scope;
  for (int t = 0; t < 200; ++t) {
    Prototype p{0, 1 + static_cast<int>(g() % 128), {}};
    for (int i = 0; i < 48; ++i) p.s.emplace_back(static_cast<std::int64_t>(g() % (15 * 128 + 1)));
    extract_fc_params(p, BiasMode::exact);
  }
  EXPECT_EQ(scope.delta().multiplies, 0u);
}

TEST(LearnClass, CycleFormulaExamples) {
  std::mt19937_64 g(9);
  struct Case { int k, v; std::uint64_t cycles; };
  for (auto c : {Case{1, 16, 4}, Case{5, 64, 29}, Case{128, 1024, 8321}}) {
    Learner l(c.v);
    const auto r = l.learn_class(0, random_shots(g, c.k, c.v));
    EXPECT_EQ(r.cycles, c.cycles);
    EXPECT_EQ(r.trace.size(), c.cycles);
  }
}

TEST(LearnClass, TraceStructure) {
  std::mt19937_64 g(2);
  Learner l(40);  // three groups, the last partly filled
  const auto r = l.learn_class(7, random_shots(g, 3, 40));
  ASSERT_EQ(r.trace.size(), static_cast<std::size_t>((3 + 2) * 3 + 1));
  EXPECT_EQ(r.trace.back().kind, StepKind::bias_write);
  int acc = 0;
  for (const auto& s : r.trace) acc += s.kind == StepKind::accumulate;
  EXPECT_EQ(acc, 9);
  EXPECT_EQ(r.extractor_cycles, 7u);
}

TEST(LearnClass, StepwiseEqualsOneShot) {
  std::mt19937_64 g(4);
  const auto shots = random_shots(g, 4, 20);
  Learner a(20), b(20);
  a.learn_class(3, shots);
  b.begin_class(3, 4);
  for (const auto& s : shots) b.accumulate_shot(s);
  EXPECT_EQ(b.pending_shots(), 4);
  b.commit_class();
  EXPECT_EQ(a.classes()[0].fc, b.classes()[0].fc);
  EXPECT_THROW(b.begin_class(3, 1), std::invalid_argument);
  Learner c(20);
  c.begin_class(1, 2);
  c.accumulate_shot(shots[0]);
  EXPECT_THROW(c.commit_class(), std::logic_error);
}

TEST(Classify, Examples) {
  Learner one(2);
  one.learn_class(4, {acts({1, 1})});
  EXPECT_EQ(one.classify(acts({15, 0})).class_id, 4);

  Learner l(2);
  l.learn_class(1, {acts({2, 4})});
  l.learn_class(2, {acts({8, 1})});
  const auto c = l.classify(acts({2, 4}));
  EXPECT_EQ(c.class_id, 1);
  ASSERT_EQ(c.scores.size(), 2u);
  EXPECT_EQ(c.class_ids, (std::vector<int>{1, 2}));
  // W.x - b: (2*2 + 4*4) - 10 = 10 ; (8*2 + 1*4) - 32 = -12
  EXPECT_EQ(c.scores[0], 10);
  EXPECT_EQ(c.scores[1], -12);
}

TEST(Classify, TiesGoToLowestClassId) {
  Learner l(2);
  l.learn_class(9, {acts({4, 4})});
  l.learn_class(3, {acts({4, 4})});
  EXPECT_EQ(l.classify(acts({1, 2})).class_id, 3);
}

TEST(Classify, NoMultiplies) {
  std::mt19937_64 g(8);
  Learner l(48);
  for (int c = 0; c < 5; ++c) l.learn_class(c, random_shots(g, 3, 48));
  audit::Scope scope;
  for (int q = 0; q < 50; ++q) l.classify(random_shots(g, 1, 48)[0]);
  EXPECT_EQ(scope.delta().multiplies, 0u);
}

// For real-valued sums and a shared k, the nearest-prototype argmin equals
// the argmin of (1/2k)|s|^2 - s.x, so argmax of s.x - |s|^2/2k.
TEST(Reformulation, ArgminPreservedBeforeQuantization) {
  std::mt19937_64 g(12);
  std::uniform_real_distribution<double> u(0, 15);
  for (int trial = 0; trial < 2000; ++trial) {
    const int ways = 2 + static_cast<int>(g() % 6), k = 1 + static_cast<int>(g() % 8), dim = 1 + static_cast<int>(g() % 20);
    std::vector<std::vector<std::vector<double>>> support(static_cast<std::size_t>(ways));
    for (auto& cls : support) {
      cls.resize(static_cast<std::size_t>(k));
      for (auto& e : cls)
        for (int i = 0; i < dim; ++i) e.push_back(u(g));
    }
    std::vector<double> x;
    for (int i = 0; i < dim; ++i) x.push_back(u(g));
    int best = 0;
    double best_score = 0;
    for (int j = 0; j < ways; ++j) {
      double sx = 0, ss = 0;
      for (int i = 0; i < dim; ++i) {
        double s = 0;
        for (const auto& e : support[static_cast<std::size_t>(j)]) s += e[static_cast<std::size_t>(i)];
        sx += s * x[static_cast<std::size_t>(i)];
        ss += s * s;
      }
      const double score = sx - ss / (2.0 * k);
      if (j == 0 || score > best_score) {
        best = j;
        best_score = score;
      }
    }
    ASSERT_EQ(best, oracle::l2_prototype_classify(support, x)) << trial;
  }
}

TEST(ExtendClass, AddsShotsWithoutTouchingOthers) {
  std::mt19937_64 g(21);
  const auto a = random_shots(g, 2, 16), b = random_shots(g, 3, 16), more = random_shots(g, 2, 16);
  Learner l(16);
  l.learn_class(0, a);
  l.learn_class(1, b);
  const auto other = l.classes()[1].fc;
  l.extend_class(0, more);
  EXPECT_EQ(l.classes()[1].fc, other);
  EXPECT_EQ(l.classes()[0].proto.k, 4);

  auto all = a;
  all.insert(all.end(), more.begin(), more.end());
  Learner ref(16);
  ref.learn_class(0, all);
  EXPECT_EQ(l.classes()[0].fc, ref.classes()[0].fc);
  EXPECT_THROW(l.extend_class(5, more), std::invalid_argument);
}

TEST(Footprint, Examples) {
  EXPECT_EQ(continual_footprint_bytes(48), 26);
  EXPECT_EQ(continual_footprint_bytes(16), 10);
  EXPECT_THROW(continual_footprint_bytes(0), std::invalid_argument);
  EXPECT_THROW(Learner(0), std::invalid_argument);
}

TEST(Capacity, ExhaustionReportsClassIndex) {
  MemoryBudget tiny{16 * 3, 3};
  Learner l(16, BiasMode::exact, tiny);
  std::mt19937_64 g(1);
  for (int c = 0; c < 3; ++c) l.learn_class(c, random_shots(g, 1, 16));
  try {
    l.learn_class(3, random_shots(g, 1, 16));
    FAIL();
  } catch (const CapacityExhausted& e) {
    EXPECT_EQ(e.class_index(), 3);
  }
  EXPECT_EQ(l.num_classes(), 3u);
}

TEST(Capacity, TwoHundredFiftyOmniglotClassesFit) {
  const auto budget = budget_after(net::presets::omniglot());
  Learner l(48, BiasMode::exact, budget);
  std::mt19937_64 g(3);
  for (int c = 0; c < 250; ++c) l.learn_class(c, random_shots(g, 1, 48));
  EXPECT_EQ(l.num_classes(), 250u);
  EXPECT_GE(l.free_bytes(), 0);
  EXPECT_EQ(l.continual_footprint(), 26);
}

TEST(ClassTable, ExportImportRoundTrip) {
  std::mt19937_64 g(6);
  Learner l(20, BiasMode::paper_literal);
  for (int c = 0; c < 4; ++c) l.learn_class(c * 3, random_shots(g, 1 + c, 20));
  const auto text = l.export_table();
  const auto back = Learner::import_table(text);
  EXPECT_EQ(back.export_table(), text);
  EXPECT_EQ(back.bias_mode(), BiasMode::paper_literal);
  const auto q = random_shots(g, 1, 20)[0];
  EXPECT_EQ(back.classify(q).scores, l.classify(q).scores);
  EXPECT_THROW(Learner::import_table(text.substr(0, text.size() - 4)), net::ParseError);
}
