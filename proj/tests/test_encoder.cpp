#include <gtest/gtest.h>

#include "test_support.hpp"
#include "viteraser/encoder.hpp"
#include "viteraser/errors.hpp"

using namespace viteraser;
using viteraser::testing::nano;

TEST(PatchEmbed, Shape) {
  PatchEmbed pe(PatchEmbedOptions(3, 96, 4));
  auto y = pe->forward(torch::randn({1, 3, 8, 8}));
  EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{1, 96, 2, 2}));
  EXPECT_EQ(pe->embed(torch::randn({1, 3, 8, 8})).sizes(), (std::vector<std::int64_t>{1, 2, 2, 96}));
}

TEST(PatchEmbed, NonDivisibleThrows) {
  PatchEmbed pe(PatchEmbedOptions(3, 8, 4));
  EXPECT_THROW(pe->forward(torch::randn({1, 3, 10, 8})), ShapeError);
}

// Identity-extended projection, no bias, no norm: each output vector starts
// with the flattened patch (channel, then row, then column) and is zero-padded.
TEST(PatchEmbed, IdentityProjectionFlattensPatch) {
  const int c = 3, d = 4, c_out = 96;
  PatchEmbed pe(PatchEmbedOptions(c, c_out, d).norm(false));
  {
    torch::NoGradGuard ng;
    pe->proj->weight.zero_();
    pe->proj->bias.zero_();
    for (int k = 0; k < c * d * d; ++k) pe->proj->weight[k][k][0][0] = 1.0;
  }
  auto x = torch::randn({1, c, 8, 8});
  auto y = pe->forward(x);
  for (int ph = 0; ph < 2; ++ph)
    for (int pw = 0; pw < 2; ++pw) {
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) {
            const int k = ch * d * d + i * d + j;
            ASSERT_FLOAT_EQ(y[0][k][ph][pw].item<float>(), x[0][ch][ph * d + i][pw * d + j].item<float>());
          }
      for (int k = c * d * d; k < c_out; ++k) ASSERT_EQ(y[0][k][ph][pw].item<float>(), 0.0f);
    }
}

// Reference patch merging of the hierarchical window-attention backbone:
// concatenate the four 2x2 neighbours (0,0), (1,0), (0,1), (1,1) along
// channels, then a bias-free linear 4c -> 2c.
TEST(PatchEmbed, PatchMergingIsSpecialCase) {
  const int c = 6;
  auto x = torch::randn({2, 8, 8, c});  // NHWC
  auto reduction = torch::randn({2 * c, 4 * c});
  using torch::indexing::Slice;
  auto x0 = x.index({Slice(), Slice(0, torch::indexing::None, 2), Slice(0, torch::indexing::None, 2)});
  auto x1 = x.index({Slice(), Slice(1, torch::indexing::None, 2), Slice(0, torch::indexing::None, 2)});
  auto x2 = x.index({Slice(), Slice(0, torch::indexing::None, 2), Slice(1, torch::indexing::None, 2)});
  auto x3 = x.index({Slice(), Slice(1, torch::indexing::None, 2), Slice(1, torch::indexing::None, 2)});
  auto merged = torch::matmul(torch::cat({x0, x1, x2, x3}, -1), reduction.t());

  PatchEmbed pe(PatchEmbedOptions(c, 2 * c, 2).norm(false));
  EXPECT_EQ(pe->proj->weight.numel(), reduction.numel());
  {
    torch::NoGradGuard ng;
    pe->proj->bias.zero_();
    for (int o = 0; o < 2 * c; ++o)
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) pe->proj->weight[o][ch * 4 + i * 2 + j][0][0] = reduction[o][(i + 2 * j) * c + ch];
  }
  auto ours = pe->embed(x.permute({0, 3, 1, 2}));
  EXPECT_TRUE(torch::allclose(ours, merged, 1e-5, 1e-5));
}

TEST(Encoder, NanoShapes) {
  torch::manual_seed(0);
  Encoder enc(nano());
  auto out = enc->forward(torch::rand({2, 3, 64, 64}));
  const std::int64_t sizes[] = {16, 8, 4, 2};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(out.features[i].sizes(),
              (std::vector<std::int64_t>{2, nano().enc_channels[i], sizes[i], sizes[i]}));
  }
}

TEST(Encoder, SizeMismatchThrows) {
  Encoder enc(nano());
  EXPECT_THROW(enc->forward(torch::rand({1, 3, 32, 32})), ShapeError);
  EXPECT_THROW(enc->forward(torch::rand({1, 1, 64, 64})), ShapeError);
}

TEST(Encoder, Deterministic) {
  torch::manual_seed(1);
  Encoder enc(nano());
  auto x = torch::rand({1, 3, 64, 64});
  auto a = enc->forward(x), b = enc->forward(x);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(torch::equal(a.features[i], b.features[i]));
}

TEST(Encoder, FullMaskReplacesEveryToken) {
  torch::manual_seed(2);
  Encoder enc(nano());
  auto mask = torch::ones({1, 1, 64, 64});
  auto a = enc->forward(torch::rand({1, 3, 64, 64}), mask);
  auto b = enc->forward(torch::rand({1, 3, 64, 64}), mask);
  EXPECT_TRUE(torch::allclose(a.features[0], b.features[0], 0.0, 1e-6));
  // Window attention over identical tokens keeps the map spatially constant.
  auto f1 = a.features[0][0];
  auto ref = f1.index({torch::indexing::Slice(), 0, 0}).view({-1, 1, 1});
  EXPECT_TRUE(torch::allclose(f1, ref.expand_as(f1), 1e-5, 1e-5));
}

TEST(Encoder, MaskTokenAtMaskedPositionsOnly) {
  torch::manual_seed(4);
  Encoder enc(nano());
  auto x = torch::rand({1, 3, 64, 64});
  auto none = enc->forward(x, torch::zeros({1, 1, 64, 64}));
  auto plain = enc->forward(x);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(torch::equal(none.features[i], plain.features[i]));
  EXPECT_THROW(enc->forward(x, torch::ones({1, 1, 32, 32})), ShapeError);
}

TEST(Encoder, GradientReachesEveryParameter) {
  torch::manual_seed(5);
  Encoder enc(nano());
  auto mask = torch::zeros({1, 1, 64, 64});
  mask.slice(2, 0, 32).fill_(1.0);
  auto out = enc->forward(torch::rand({1, 3, 64, 64}), mask);
  torch::Tensor loss = torch::zeros({});
  for (auto& f : out.features) loss = loss + viteraser::testing::project(f);
  loss.backward();
  for (const auto& item : enc->named_parameters()) {
    ASSERT_TRUE(item.value().grad().defined()) << item.key();
    EXPECT_GT(item.value().grad().abs().sum().item<double>(), 0.0) << item.key();
  }
}

TEST(Encoder, NormalizeInput) {
  auto x = torch::tensor({0.0, 0.5, 1.0});
  EXPECT_TRUE(torch::equal(normalize_input(x), torch::tensor({-1.0, 0.0, 1.0})));
}
