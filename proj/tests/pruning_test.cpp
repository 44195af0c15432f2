#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "support.hpp"

namespace headprune {
namespace {

using testing::bitwise_equal;
using testing::tiny_config;

std::vector<double> snapshot(const Model& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters().items()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

TEST(Score, DisconnectedHeadScoresExactlyZero) {
  Model m(tiny_config(16, 2, 2), 3);
  testing::disconnect_head(m, 1, 0);
  Rng rng(5);
  const auto batch = testing::random_examples(8, 16, 8, rng);
  const ImportanceGrid g = score_heads(m, batch, TaskSpec{});
  EXPECT_EQ(g.at(1, 0), 0.0);
  EXPECT_GT(g.at(0, 0), 0.0);
  EXPECT_GT(g.at(1, 1), 0.0);
  EXPECT_EQ(g.n_examples, 8u);

  ImportanceGrid only_that = g;
  for (auto& s : only_that.scores) s = s == 0.0 ? 0.0 : 1.0;
  const PruneResult p = prune(m, only_that, 0.0);
  EXPECT_EQ(p.report.retained_count, 3u);
  for (const auto& ex : batch)
    EXPECT_TRUE(bitwise_equal(testing::logit(m, ex.input), testing::logit(p.model, ex.input)));
}

TEST(Score, MatchesFiniteDifferenceOnOneHead) {
  ModelConfig c = tiny_config(16, 1, 1, 6, 8);
  Model m(c, 12);
  Rng rng(9);
  const auto batch = testing::random_examples(5, 16, 8, rng);
  const ImportanceGrid g = score_heads(m, batch, TaskSpec{});
  double oracle = 0.0;
  for (const auto& ex : batch) oracle += testing::fd_head_importance(m, ex, 0, 0);
  oracle /= static_cast<double>(batch.size());
  EXPECT_NEAR(g.at(0, 0), oracle, 1e-5);
  EXPECT_LT(testing::relative_error(g.at(0, 0), oracle), 1e-5);
}

TEST(Score, SumReductionScalesByElementCount) {
  Model m(tiny_config(16, 1, 2), 4);
  const Example ex{"only", testing::padded({2, 5, 9}, 6), 1};
  ScoreOptions sum_opts;
  sum_opts.reduction = Reduction::kSum;
  const ImportanceGrid mean = score_heads(m, {ex}, TaskSpec{});
  const ImportanceGrid total = score_heads(m, {ex}, TaskSpec{}, sum_opts);
  for (std::size_t i = 0; i < mean.scores.size(); ++i) EXPECT_NEAR(total.scores[i], mean.scores[i] * 3 * 4, 1e-12);
}

TEST(Score, DeterministicAndLeavesModelUntouched) {
  Model m(tiny_config(16, 2, 2), 8);
  Rng rng(10);
  const auto batch = testing::random_examples(6, 16, 7, rng);
  const auto before = snapshot(m);
  const ImportanceGrid a = score_heads(m, batch, TaskSpec{});
  const ImportanceGrid b = score_heads(m, batch, TaskSpec{});
  EXPECT_EQ(grid_csv(a), grid_csv(b));
  const auto after = snapshot(m);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) ASSERT_TRUE(bitwise_equal(before[i], after[i]));
  for (const auto& p : m.parameters().items())
    for (double gval : p.tensor.grad()) ASSERT_EQ(gval, 0.0);
  for (double s : a.scores) EXPECT_GE(s, 0.0);
}

TEST(Score, RejectsEmptyDataset) {
  Model m(tiny_config(16, 1, 2), 1);
  EXPECT_THROW(score_heads(m, {}, TaskSpec{}), UsageError);
}

ImportanceGrid grid_12x12_with_zeros(std::size_t zeros, std::uint64_t seed) {
  ImportanceGrid g(12, 12);
  Rng rng(seed);
  for (auto& s : g.scores) s = rng.uniform(0.001, 1.0);
  std::vector<std::size_t> idx(144);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  for (std::size_t i = 0; i < zeros; ++i) g.scores[idx[i]] = 0.0;
  return g;
}

TEST(Prune, TwelveZerosOfOneHundredFortyFour) {
  HeadMask mask(12, 12);
  const PruneReport r = prune_mask(mask, grid_12x12_with_zeros(12, 3), 0.0);
  EXPECT_EQ(r.retained_count, 132u);
  EXPECT_EQ(r.pruned_heads.size(), 12u);
  EXPECT_EQ(r.total_count, 144u);
  EXPECT_TRUE(std::is_sorted(r.pruned_heads.begin(), r.pruned_heads.end()));
}

TEST(Prune, AccountingAlwaysAddsUp) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t zeros = rng.below(145);
    HeadMask mask(12, 12);
    // Some heads may already be off before this round.
    for (int k = 0; k < 5; ++k) mask.set(rng.below(12), rng.below(12), false);
    const PruneReport r = prune_mask(mask, grid_12x12_with_zeros(zeros, rng.next()), rng.uniform(0.0, 0.01));
    EXPECT_EQ(r.retained_count + r.pruned_heads.size(), r.total_count);
    EXPECT_EQ(r.retained_count, mask.active_count());
  }
}

TEST(Prune, AllPositiveIsIdentity) {
  Model m(tiny_config(16, 2, 2), 6);
  ImportanceGrid g(2, 2);
  g.scores = {0.1, 1e-300, 2.0, 0.5};
  const PruneResult p = prune(m, g, 0.0);
  EXPECT_TRUE(p.report.pruned_heads.empty());
  Rng rng(1);
  for (const auto& ex : testing::random_examples(10, 16, 8, rng))
    EXPECT_TRUE(bitwise_equal(testing::logit(m, ex.input), testing::logit(p.model, ex.input)));
}

TEST(Prune, AllZeroStillRuns) {
  Model m(tiny_config(16, 2, 2), 6);
  const PruneResult p = prune(m, ImportanceGrid(2, 2), 0.0);
  EXPECT_EQ(p.report.retained_count, 0u);
  EXPECT_EQ(p.model.head_mask().active_count(), 0u);
  const double l = testing::logit(p.model, testing::padded({4, 5, 6}, 6));
  EXPECT_TRUE(std::isfinite(l));
}

TEST(Prune, EpsilonThresholdIsInclusive) {
  HeadMask mask(1, 3);
  ImportanceGrid g(1, 3);
  g.scores = {0.01, 0.02, 0.03};
  const PruneReport r = prune_mask(mask, g, 0.02);
  EXPECT_EQ(r.retained_count, 1u);
}

TEST(Prune, RejectsNegativeThresholdAndMismatch) {
  HeadMask mask(2, 2);
  EXPECT_THROW(prune_mask(mask, ImportanceGrid(2, 2), -0.1), UsageError);
  EXPECT_THROW(prune_mask(mask, ImportanceGrid(3, 2), 0.0), UsageError);
  EXPECT_EQ(mask.active_count(), 4u);
}

TEST(Prune, OnlyTheMaskChanges) {
  Model m(tiny_config(16, 2, 2), 6);
  ImportanceGrid g(2, 2);
  g.scores = {0.0, 1.0, 1.0, 0.0};
  const PruneResult p = prune(m, g, 0.0);
  const auto a = snapshot(m), b = snapshot(p.model);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_TRUE(bitwise_equal(a[i], b[i]));
}

TEST(Prune, ReportJsonRoundTrip) {
  HeadMask mask(3, 4);
  ImportanceGrid g(3, 4);
  g.scores = {0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 0};
  const PruneReport r = prune_mask(mask, g, 0.0);
  const PruneReport back = prune_report_from_json(to_json(r));
  EXPECT_EQ(back.pruned_heads, r.pruned_heads);
  EXPECT_EQ(back.retained_count, 9u);
  EXPECT_EQ(to_json(r)["pruned_count"], 3);
}

TEST(GridCsv, RoundTripIsByteIdentical) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    ImportanceGrid g(1 + rng.below(12), 1 + rng.below(12));
    for (auto& s : g.scores) s = rng.below(4) == 0 ? 0.0 : std::pow(10.0, rng.uniform(-12, 2));
    const std::string csv = grid_csv(g);
    std::istringstream in(csv);
    EXPECT_EQ(grid_csv(parse_grid_csv(in)), csv);
  }
}

TEST(GridCsv, StrictParsing) {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return parse_grid_csv(in);
  };
  EXPECT_THROW(parse("l,h,s\n0,0,1\n"), DataError);
  EXPECT_THROW(parse("layer,head,score\n0,0,-1\n"), DataError);
  EXPECT_THROW(parse("layer,head,score\n0,1,1\n0,0,1\n"), DataError);
  EXPECT_THROW(parse("layer,head,score\n0,0,1\n1,1,1\n"), DataError);
  EXPECT_THROW(parse("layer,head,score\n0,0,abc\n"), DataError);
  EXPECT_EQ(parse("layer,head,score\n0,0,0.5\n0,1,0\n").heads, 2u);
}

Checkpoint wrap(const Model& m, const Vocabulary& v, const std::string& task = "idiom") {
  return Checkpoint{m, v, TaskSpec::parse(task), TrainConfig{}, {}};
}

TEST(Compare, IdenticalModelsHaveZeroDeltas) {
  const auto corpus = make_synthetic_corpus(20, 0.5, 1);
  const Vocabulary v = build_vocab(corpus, 40);
  Model m(tiny_config(v.size(), 1, 2, 8, 24), 2);
  const auto examples = encode_examples(corpus, v, TaskSpec{}, 24);
  const Comparison c = compare(wrap(m, v), wrap(m, v), examples, TaskSpec{});
  for (const auto& row : kMetricRows) EXPECT_EQ(c.delta(row.field), 0.0) << row.label;
  EXPECT_EQ(c.original.n, 20u);
}

TEST(Compare, RejectsDifferentVocabularyOrTask) {
  const auto corpus = make_synthetic_corpus(20, 0.5, 1);
  const Vocabulary v = build_vocab(corpus, 40);
  const Vocabulary other = build_vocab(corpus, 41);
  Model m(tiny_config(v.size(), 1, 2, 8, 24), 2);
  Model m2(tiny_config(other.size(), 1, 2, 8, 24), 2);
  const auto examples = encode_examples(corpus, v, TaskSpec{}, 24);
  EXPECT_THROW(compare(wrap(m, v), wrap(m2, other), examples, TaskSpec{}), UsageError);
  EXPECT_THROW(compare(wrap(m, v), wrap(m, v, "metaphor"), examples, TaskSpec{}), UsageError);
}

// One head carries the marker signal and nothing else reaches the
// classifier: head 0 averages the marker embedding over the sentence and
// writes it into dims 2-3, which are the only dims the LSTM reads.
Model signal_model(const Vocabulary& v) {
  ModelConfig c = tiny_config(v.size(), 1, 2, 4, 32);
  c.lstm_hidden = 1;
  c.lstm_layers = 1;
  Model m(c, 1);
  for (auto& p : m.parameters().items()) {
    const bool keep_ones = p.name.find("gamma") != std::string::npos;
    for (auto& x : p.tensor.mutable_data()) x = keep_ones ? 1.0 : 0.0;
  }
  auto set = [&](const std::string& name, std::size_t index, double value) {
    m.parameters().at(name).mutable_data()[index] = value;
  };
  for (const char* w : {"zor", "kava"}) {
    const int id = *v.find(w);
    set("embed.token", id * 4 + 0, 1.0);
    set("embed.token", id * 4 + 1, -1.0);
  }
  // value = [x0, x1]
  set("encoder.0.attn.head.0.value.weight", 0 * 2 + 0, 1.0);
  set("encoder.0.attn.head.0.value.weight", 1 * 2 + 1, 1.0);
  // head 0, dim 0 -> output dims 2 (+10) and 3 (-10)
  set("encoder.0.attn.out.weight", 0 * 4 + 2, 10.0);
  set("encoder.0.attn.out.weight", 0 * 4 + 3, -10.0);
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("bilstm.0.") + dir + ".";
    set(p + "input.weight", 2 * 4 + 2, 5.0);  // dim 2 drives the candidate gate
    set(p + "bias", 0, 10.0);                 // input gate open
    set(p + "bias", 1, -10.0);                // forget gate shut
    set(p + "bias", 3, 10.0);                 // output gate open
  }
  set("classifier.weight", 0, 10.0);
  set("classifier.weight", 1, 10.0);
  set("classifier.bias", 0, -1.0);
  return m;
}

TEST(Compare, PruningTheOnlySignalHeadDropsToChance) {
  const auto corpus = make_synthetic_corpus(200, 0.5, 21);
  const Vocabulary v = build_vocab(corpus, 256);
  const Model m = signal_model(v);
  const TaskSpec task;
  const auto examples = encode_examples(corpus, v, task, 32);

  ImportanceGrid g(1, 2);
  g.scores = {0.0, 1.0};
  const PruneResult pruned = prune(m, g, 0.0);
  const Comparison c = compare(wrap(m, v), wrap(pruned.model, v), examples, task);
  EXPECT_EQ(c.original.accuracy, 1.0);
  EXPECT_EQ(c.pruned.accuracy, 0.5);
  EXPECT_EQ(c.pruned_heads, 1u);

  // The scorer agrees: head 1 is disconnected, head 0 matters.
  const ImportanceGrid scored = score_heads(m, examples, task);
  EXPECT_EQ(scored.at(0, 1), 0.0);
  EXPECT_GT(scored.at(0, 0), 0.0);
}

}  // namespace
}  // namespace headprune
