#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "support.hpp"

namespace headprune {
namespace {

std::vector<CorpusRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

const std::string kHeader = "id\texpression\tsentence\tidiom\tmetaphor\tsplit\n";

TEST(Corpus, HeaderOnlyIsEmpty) { EXPECT_TRUE(parse(kHeader).empty()); }

TEST(Corpus, LabelsAreTrimmedAndCaseInsensitive) {
  const auto rows = parse(kHeader + "r1\tkick the bucket\the kicked the bucket\tyes \t NO\tTrain\n");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].idiom);
  ASSERT_TRUE(rows[0].metaphor.has_value());
  EXPECT_FALSE(*rows[0].metaphor);
  EXPECT_EQ(rows[0].split, Split::kTrain);
}

TEST(Corpus, SixColumnRowPopulatesEveryField) {
  const auto rows = parse(kHeader + "r7\tspill the beans\tshe spilled the beans\tYes\tYes\ttest\n");
  ASSERT_EQ(rows.size(), 1u);
  const CorpusRecord& r = rows[0];
  EXPECT_EQ(r.id, "r7");
  EXPECT_EQ(r.expression, "spill the beans");
  EXPECT_EQ(r.sentence, "she spilled the beans");
  EXPECT_TRUE(r.idiom);
  EXPECT_EQ(r.metaphor, std::optional<bool>(true));
  EXPECT_EQ(r.split, Split::kTest);
}

TEST(Corpus, HeaderOrderAndCaseAreFree) {
  const auto rows = parse("Split\tSENTENCE\tid\tIdiom\tExpression\ntrain\tx y\tq1\tNo\tx\n");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].sentence, "x y");
  EXPECT_FALSE(rows[0].metaphor.has_value());
}

TEST(Corpus, MissingColumnIsSchemaError) {
  EXPECT_THROW(parse("id\texpression\tsentence\tsplit\n"), SchemaError);
  EXPECT_THROW(parse(""), SchemaError);
}

TEST(Corpus, BadLabelCitesRowId) {
  try {
    parse(kHeader + "ok\te\ts\tYes\tNo\ttrain\nbad-row\te\ts\tmaybe\tNo\ttrain\n");
    FAIL() << "expected DataError";
  } catch (const SchemaError&) {
    FAIL() << "bad label is a data error, not a schema error";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad-row"), std::string::npos) << msg;
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
  }
}

TEST(Corpus, RejectsDuplicateIdsAndBadSplit) {
  EXPECT_THROW(parse(kHeader + "a\te\ts\tYes\tNo\ttrain\na\te\ts\tNo\tNo\ttrain\n"), DataError);
  EXPECT_THROW(parse(kHeader + "a\te\ts\tYes\tNo\tdev\n"), DataError);
}

TEST(Corpus, RoundTripPreservesRecords) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    auto records = make_synthetic_corpus(2 * (1 + rng.below(30)), rng.uniform(), rng.next());
    for (auto& r : records)
      if (rng.below(3) == 0) r.metaphor.reset();
    EXPECT_EQ(parse(format_corpus(records)), records);
  }
}

TEST(Task, MissingMetaphorIsRejectedAtBinding) {
  CorpusRecord r{"m1", "e", "s", true, std::nullopt, Split::kTrain};
  EXPECT_EQ(TaskSpec::parse("idiom").require_label(r), 1);
  EXPECT_THROW(TaskSpec::parse("metaphor").require_label(r), DataError);
  EXPECT_THROW(TaskSpec::parse("sarcasm"), UsageError);
}

std::vector<CorpusRecord> labelled(std::size_t pos, std::size_t neg) {
  std::vector<CorpusRecord> out;
  for (std::size_t i = 0; i < pos + neg; ++i) {
    out.push_back({"r" + std::to_string(i), "e", "s", i < pos, i < pos, Split::kTrain});
  }
  return out;
}

TEST(BalancedSubset, TwoHundredIsHundredEach) {
  const TaskSpec task = TaskSpec::parse("idiom");
  const auto subset = balanced_subset(labelled(140, 160), task, 200, 3);
  ASSERT_EQ(subset.size(), 200u);
  const auto positives = std::count_if(subset.begin(), subset.end(), [](const auto& r) { return r.idiom; });
  EXPECT_EQ(positives, 100);
}

TEST(BalancedSubset, ZeroIsEmpty) {
  EXPECT_TRUE(balanced_subset(labelled(3, 3), TaskSpec::parse("idiom"), 0, 1).empty());
}

TEST(BalancedSubset, SameSeedSameOrder) {
  const auto records = labelled(50, 50);
  const TaskSpec task = TaskSpec::parse("metaphor");
  const auto a = balanced_subset(records, task, 40, 9);
  const auto b = balanced_subset(records, task, 40, 9);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, balanced_subset(records, task, 40, 10));
}

TEST(BalancedSubset, Errors) {
  const TaskSpec task = TaskSpec::parse("idiom");
  EXPECT_THROW(balanced_subset(labelled(10, 10), task, 5, 1), UsageError);
  try {
    balanced_subset(labelled(3, 40), task, 20, 1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("positive=3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("negative=40"), std::string::npos) << msg;
  }
}

TEST(BalancedSubset, NeverRepeatsAndAlwaysBalanced) {
  Rng rng(5);
  const TaskSpec task = TaskSpec::parse("idiom");
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t pos = rng.below(40), neg = rng.below(40);
    const std::size_t n = 2 * rng.below(std::min(pos, neg) + 1);
    const auto subset = balanced_subset(labelled(pos, neg), task, n, rng.next());
    std::set<std::string> ids;
    std::size_t positives = 0;
    for (const auto& r : subset) {
      ids.insert(r.id);
      positives += r.idiom ? 1 : 0;
    }
    EXPECT_EQ(ids.size(), n);
    EXPECT_EQ(positives, n / 2);
  }
}

TEST(Vocabulary, HandCountedExample) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"a b", "a"}, 6);
  EXPECT_EQ(v.size(), 6u);
  ASSERT_TRUE(v.find("a"));
  ASSERT_TRUE(v.find("b"));
  const EncodedInput in = tokenize("a b", v, 4);
  EXPECT_EQ(in.ids, (std::vector<int>{kClsId, *v.find("a"), *v.find("b"), kSepId}));
  EXPECT_EQ(in.mask, (std::vector<unsigned char>{1, 1, 1, 1}));
}

TEST(Vocabulary, WordsRankedByFrequencyThenCharacters) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"ab cd ab", "ab ef"}, 9);
  // ab (3), then cd and ef tied (byte order), then characters by frequency.
  EXPECT_EQ(v.learned_pieces(), (std::vector<std::string>{"ab", "cd", "ef", "a", "b"}));
}

TEST(Vocabulary, TargetSizeMustExceedReservedBlock) {
  EXPECT_THROW(build_vocab(std::vector<std::string>{"a"}, 4), UsageError);
}

TEST(Tokenize, EmptySentence) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"a b"}, 8);
  const EncodedInput in = tokenize("", v, 5);
  EXPECT_EQ(in.ids, (std::vector<int>{kClsId, kSepId, kPadId, kPadId, kPadId}));
  EXPECT_EQ(in.mask, (std::vector<unsigned char>{1, 1, 0, 0, 0}));
}

TEST(Tokenize, OverlongSentenceIsTruncatedToMaxLen) {
  const Vocabulary v = build_vocab(std::vector<std::string>{"w"}, 8);
  std::string sentence;
  for (int i = 0; i < 300; ++i) sentence += "w ";
  const EncodedInput in = tokenize(sentence, v, 128);
  ASSERT_EQ(in.ids.size(), 128u);
  EXPECT_EQ(in.ids.front(), kClsId);
  EXPECT_EQ(in.ids[127], kSepId);
  EXPECT_EQ(in.real_count(), 128u);
}

TEST(Tokenize, SubwordFallbackAndUnknownCharacters) {
  const Vocabulary v(std::vector<std::string>{"un", "break", "able", "a"});
  EXPECT_EQ(word_pieces("unbreakable", v),
            (std::vector<int>{*v.find("un"), *v.find("break"), *v.find("able")}));
  EXPECT_EQ(word_pieces("unz", v), (std::vector<int>{*v.find("un"), kUnkId}));
  EXPECT_EQ(word_pieces("a", v), (std::vector<int>{*v.find("a")}));
}

TEST(Tokenize, AlwaysExactlyMaxLenWithConsistentMask) {
  const auto corpus = make_synthetic_corpus(40, 0.5, 2);
  const Vocabulary v = build_vocab(corpus, 30);
  Rng rng(8);
  for (const auto& r : corpus) {
    const std::size_t max_len = 2 + rng.below(20);
    const EncodedInput in = tokenize(r.sentence, v, max_len);
    ASSERT_EQ(in.ids.size(), max_len);
    ASSERT_EQ(in.mask.size(), max_len);
    const std::size_t real = in.real_count();
    for (std::size_t t = 0; t < max_len; ++t) {
      EXPECT_EQ(in.mask[t], t < real ? 1 : 0);
      if (t >= real) {
        EXPECT_EQ(in.ids[t], kPadId);
      }
    }
    EXPECT_EQ(in.ids[real - 1], kSepId);
  }
  EXPECT_THROW(tokenize("x", v, 1), UsageError);
}

TEST(Synthetic, TwoHundredIsBalanced) {
  const auto corpus = make_synthetic_corpus(200, 0.5, 7);
  ASSERT_EQ(corpus.size(), 200u);
  std::size_t pos = 0, test_pos = 0, test_neg = 0;
  for (const auto& r : corpus) {
    pos += r.idiom ? 1 : 0;
    if (r.split == Split::kTest) (r.idiom ? test_pos : test_neg) += 1;
  }
  EXPECT_EQ(pos, 100u);
  EXPECT_EQ(test_pos, 20u);
  EXPECT_EQ(test_neg, 20u);
}

TEST(Synthetic, MarkerPresenceMatchesLabel) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (const auto& r : make_synthetic_corpus(200, 0.5, seed)) {
      const bool has_marker = (" " + r.sentence + " ").find(std::string(" ") + kMarkerPhrase + " ") != std::string::npos;
      EXPECT_EQ(has_marker, r.idiom) << r.id;
      EXPECT_EQ(r.metaphor, std::optional<bool>(r.idiom));
    }
  }
}

TEST(Synthetic, SameSeedSameFile) {
  EXPECT_EQ(format_corpus(make_synthetic_corpus(200, 0.5, 11)), format_corpus(make_synthetic_corpus(200, 0.5, 11)));
  EXPECT_NE(format_corpus(make_synthetic_corpus(200, 0.5, 11)), format_corpus(make_synthetic_corpus(200, 0.5, 12)));
  EXPECT_THROW(make_synthetic_corpus(7, 0.5, 1), UsageError);
}

TEST(Splits, ValidationIsTenPercentOfTrain) {
  const auto corpus = make_synthetic_corpus(200, 0.5, 7);
  const CorpusSplits s = carve_splits(corpus, 7);
  EXPECT_EQ(s.test.size(), 40u);
  EXPECT_EQ(s.validation.size(), 16u);
  EXPECT_EQ(s.train.size(), 144u);
  std::set<std::string> ids;
  for (auto split : {DataSplit::kTrain, DataSplit::kValidation, DataSplit::kTest})
    for (const auto& r : s.get(split)) ids.insert(r.id);
  EXPECT_EQ(ids.size(), 200u);

  const CorpusSplits again = carve_splits(corpus, 7);
  EXPECT_EQ(again.validation, s.validation);
}

TEST(Splits, TinyTrainSetStillGetsOneValidationRow) {
  const auto rows = labelled(1, 1);
  const CorpusSplits s = carve_splits(rows, 1);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.train.size(), 1u);
}

}  // namespace
}  // namespace headprune
