#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "support.hpp"

namespace headprune {
namespace {

using testing::padded;
using testing::tiny_config;

void set_values(Model& m, const std::string& name, const std::vector<double>& v) {
  auto data = m.parameters().at(name).mutable_data();
  ASSERT_EQ(data.size(), v.size()) << name;
  std::copy(v.begin(), v.end(), data.begin());
}

TEST(ModelConfig, RejectsIndivisibleHeads) {
  ModelConfig c = tiny_config(10, 1, 3, 8);
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(Model(c, 1), ConfigError);
}

TEST(Attention, SingleTokenAttendsToItself) {
  Model m(tiny_config(10, 2, 2), 1);
  ForwardOptions opts;
  opts.keep_attention = true;
  const auto out = m.forward(padded({4}, 6), opts);
  for (const auto& layer : out.attention) {
    for (const auto& a : layer) {
      ASSERT_EQ(a.shape(), (Shape{1, 1}));
      EXPECT_EQ(a[0], 1.0);
    }
  }
}

TEST(Attention, ClosedGateContributesNothing) {
  Model m(tiny_config(12, 2, 2), 3);
  HeadMask mask = m.head_mask();
  mask.set(1, 0, false);
  m.set_head_mask(mask);
  const auto out = m.forward(padded({2, 5, 7, 9}, 6));
  for (double v : out.head_outputs[1][0].data()) EXPECT_EQ(v, 0.0);
  bool any_nonzero = false;
  for (double v : out.head_outputs[1][1].data()) any_nonzero |= v != 0.0;
  EXPECT_TRUE(any_nonzero);
}

TEST(Attention, TwelveByTwelveGridHas144HeadOutputs) {
  // 12 layers x 12 heads with narrow widths; only the head layout matters here.
  ModelConfig c = tiny_config(8, 12, 12, 24, 8);
  Model m(c, 5);
  const auto out = m.forward(padded({1, 2, 3}, 8));
  ASSERT_EQ(out.head_outputs.size(), 12u);
  std::size_t count = 0;
  for (const auto& layer : out.head_outputs) {
    ASSERT_EQ(layer.size(), 12u);
    for (const auto& h : layer) {
      EXPECT_EQ(h.shape(), (Shape{3, 2}));
      ++count;
    }
  }
  EXPECT_EQ(count, 144u);
  EXPECT_EQ(m.head_mask().total(), 144u);
}

TEST(Attention, MaskedKeysGetNegligibleWeight) {
  Model m(tiny_config(12, 1, 2), 8);
  EncodedInput in = padded({3, 4, 5, 6}, 6);
  in.mask[1] = 0;
  in.mask[2] = 0;
  ForwardOptions opts;
  opts.keep_attention = true;
  const auto out = m.forward(in, opts);
  for (const auto& a : out.attention[0]) {
    for (std::size_t r = 0; r < a.dim(0); ++r) {
      EXPECT_LT(a[r * a.dim(1) + 1], 1e-30);
      EXPECT_LT(a[r * a.dim(1) + 2], 1e-30);
    }
  }
}

TEST(Lstm, ZeroWeightsGiveZeroFeatures) {
  ModelConfig c = tiny_config(10, 1, 2);
  Model m(c, 2);
  for (auto& p : m.parameters().items())
    if (p.name.rfind("bilstm.", 0) == 0)
      for (auto& x : p.tensor.mutable_data()) x = 0.0;
  Rng rng(1);
  std::vector<double> h(5 * c.d_model);
  for (auto& v : h) v = rng.uniform(-2, 2);
  const Tensor features = m.bilstm(Tensor({5, c.d_model}, h));
  ASSERT_EQ(features.shape(), (Shape{1, 2 * c.lstm_hidden}));
  for (double v : features.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SingleCellMatchesHandComputation) {
  // One step, x = 1, gates (i, f, g, o) with weights 0.5, -0.3, 0.8, 0.2 and
  // biases 0.1, 0.2, -0.1, 0.05, from h0 = c0 = 0:
  //   c = sigmoid(0.6) * tanh(0.7), h = sigmoid(0.25) * tanh(c).
  ModelConfig c = tiny_config(4, 1, 1, 1, 4);
  c.lstm_hidden = 1;
  c.lstm_layers = 1;
  Model m(c, 1);
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = std::string("bilstm.0.") + dir + ".";
    set_values(m, p + "input.weight", {0.5, -0.3, 0.8, 0.2});
    set_values(m, p + "hidden.weight", {0.9, 0.9, 0.9, 0.9});
    set_values(m, p + "bias", {0.1, 0.2, -0.1, 0.05});
  }
  const Tensor features = m.bilstm(Tensor({1, 1}, {1.0}));
  EXPECT_NEAR(features[0], 0.20887363517137683, 1e-12);
  EXPECT_NEAR(features[1], 0.20887363517137683, 1e-12);
}

TEST(Lstm, DirectionsAreMirrorImages) {
  // With identical weights in both directions, reversing the sequence swaps
  // the forward-final and backward-first states.
  ModelConfig c = tiny_config(4, 1, 1, 2, 4);
  c.lstm_layers = 1;
  c.lstm_hidden = 3;
  Model m(c, 9);
  for (const char* part : {"input.weight", "hidden.weight", "bias"}) {
    const auto fwd = m.parameters().at(std::string("bilstm.0.fwd.") + part).data();
    set_values(m, std::string("bilstm.0.bwd.") + part, std::vector<double>(fwd.begin(), fwd.end()));
  }
  const Tensor a = m.bilstm(Tensor({2, 2}, {0.3, -0.5, 1.2, 0.7}));
  const Tensor b = m.bilstm(Tensor({2, 2}, {1.2, 0.7, 0.3, -0.5}));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(a[j], b[3 + j]);
    EXPECT_DOUBLE_EQ(a[3 + j], b[j]);
  }
}

TEST(Classifier, ZeroWeightsGiveOneHalf) {
  ModelConfig c = tiny_config(10, 1, 2);
  Model m(c, 4);
  set_values(m, "classifier.weight", std::vector<double>(2 * c.lstm_hidden, 0.0));
  set_values(m, "classifier.bias", {0.0});
  const auto out = m.forward(padded({1, 2, 3}, 5));
  EXPECT_EQ(out.prob(), 0.5);
  EXPECT_TRUE(out.predicted_positive());
}

TEST(Classifier, LogitLnThreeGivesThreeQuarters) {
  ModelConfig c = tiny_config(10, 1, 2);
  Model m(c, 4);
  set_values(m, "classifier.weight", std::vector<double>(2 * c.lstm_hidden, 0.0));
  set_values(m, "classifier.bias", {std::log(3.0)});
  const auto out = m.forward(padded({1, 2, 3}, 5));
  EXPECT_NEAR(out.prob(), 0.75, 1e-12);
}

TEST(Loss, KnownValues) {
  EXPECT_NEAR(bce_loss(Tensor({1, 1}, {0.75}), 1).item(), 0.2876820724517809, 1e-12);
  EXPECT_NEAR(bce_loss(Tensor({1, 1}, {0.5}), 0).item(), 0.6931471805599453, 1e-12);
  EXPECT_NEAR(bce_loss(Tensor({1, 1}, {0.5}), 1).item(), 0.6931471805599453, 1e-12);
}

TEST(Loss, ClippedAtTheExtremes) {
  const double cap = -std::log(kProbabilityClip);
  EXPECT_NEAR(bce_loss(Tensor({1, 1}, {0.0}), 1).item(), cap, 1e-9);
  EXPECT_TRUE(std::isfinite(bce_loss(Tensor({1, 1}, {1.0}), 0).item()));
}

TEST(Loss, RejectsBadLabel) { EXPECT_THROW(bce_loss(Tensor({1, 1}, {0.5}), 2), UsageError); }

TEST(Loss, GradientWithRespectToLogitIsPMinusY) {
  for (double z : {-3.0, -0.4, 0.0, 0.9, 2.5}) {
    for (int y : {0, 1}) {
      Tensor logit = Tensor::parameter({1, 1}, {z});
      Tensor p = sigmoid(logit);
      bce_loss(p, y).backward();
      EXPECT_NEAR(logit.grad()[0], p.item() - y, 1e-12) << "z=" << z << " y=" << y;
    }
  }
}

TEST(Forward, PaddingDoesNotChangeTheLogit) {
  Model m(tiny_config(20, 2, 2), 6);
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t len = 1 + rng.below(6);
    std::vector<int> ids(len);
    for (auto& id : ids) id = 4 + static_cast<int>(rng.below(16));
    const double base = testing::logit(m, padded(ids, 6));
    for (std::size_t width : {8u, 12u}) {
      EncodedInput in = padded(ids, width);
      // Garbage in the padded slots must not leak through.
      for (std::size_t t = len; t < width; ++t) in.ids[t] = 4 + static_cast<int>(rng.below(16));
      EXPECT_EQ(testing::logit(m, in), base);
    }
  }
}

TEST(Forward, InteriorMaskHolesAreIgnoredDownstream) {
  // Masked positions never reach the BiLSTM, so their ids cannot change the logit.
  Model m(tiny_config(20, 2, 2), 7);
  EncodedInput a = padded({5, 6, 7, 8, 9}, 8);
  a.mask[2] = 0;
  EncodedInput b = a;
  b.ids[2] = 17;
  EXPECT_EQ(testing::logit(m, a), testing::logit(m, b));
}

TEST(Forward, AllOpenMaskIsTheDefault) {
  Model m(tiny_config(20, 2, 3, 9), 8);
  const EncodedInput in = padded({3, 1, 4, 1, 5}, 7);
  const double before = testing::logit(m, in);
  m.set_head_mask(HeadMask(2, 3));
  EXPECT_EQ(testing::logit(m, in), before);
}

TEST(Forward, ClosedGateEqualsZeroValuePath) {
  Model gated(tiny_config(20, 2, 2), 10);
  Model zeroed = gated;
  HeadMask mask = gated.head_mask();
  mask.set(0, 1, false);
  gated.set_head_mask(mask);
  set_values(zeroed, "encoder.0.attn.head.1.value.weight", std::vector<double>(8 * 4, 0.0));
  set_values(zeroed, "encoder.0.attn.head.1.value.bias", std::vector<double>(4, 0.0));
  const EncodedInput in = padded({2, 7, 11, 13}, 6);
  EXPECT_NEAR(testing::logit(gated, in), testing::logit(zeroed, in), 1e-12);
}

TEST(Forward, RejectsMismatchedMask) {
  Model m(tiny_config(10, 1, 2), 1);
  EXPECT_THROW(m.set_head_mask(HeadMask(2, 2)), UsageError);
}

TEST(Forward, RejectsBadInputs) {
  Model m(tiny_config(10, 1, 2), 1);
  EXPECT_THROW(m.forward(padded({}, 4)), DataError);
  EXPECT_THROW(m.forward(padded({11}, 4)), DataError);
  EXPECT_THROW(m.forward(padded({1}, 40)), DataError);
}

TEST(Dropout, SameSeedSameOutput) {
  ModelConfig c = tiny_config(20, 2, 2);
  c.dropout_rate = 0.3;
  Model m(c, 12);
  const EncodedInput in = padded({4, 5, 6, 7}, 6);
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    ForwardOptions opts;
    opts.training = true;
    opts.rng = &rng;
    NoGradGuard guard;
    return m.forward(in, opts).logit.item();
  };
  EXPECT_TRUE(testing::bitwise_equal(run(3), run(3)));
  EXPECT_NE(run(3), run(4));
  EXPECT_NE(run(3), testing::logit(m, in));
}

TEST(Parameters, CopyIsDeep) {
  Model a(tiny_config(10, 1, 2), 1);
  Model b = a;
  b.parameters().at("classifier.bias").mutable_data()[0] = 5.0;
  EXPECT_EQ(a.parameters().at("classifier.bias")[0], 0.0);
}

TEST(Parameters, SameSeedSameInitialization) {
  Model a(tiny_config(10, 2, 2), 42), b(tiny_config(10, 2, 2), 42);
  const auto pa = a.parameters().items();
  const auto pb = b.parameters().items();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    for (std::size_t j = 0; j < pa[i].tensor.size(); ++j) EXPECT_EQ(pa[i].tensor[j], pb[i].tensor[j]);
  }
}

}  // namespace
}  // namespace headprune
