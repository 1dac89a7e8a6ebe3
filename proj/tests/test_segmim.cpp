#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"
#include "viteraser/errors.hpp"
#include "viteraser/model.hpp"
#include "viteraser/segmim.hpp"

using namespace viteraser;
using viteraser::testing::gradcheck;

TEST(MimMask, CountAt512) {
  for (std::uint64_t seed : {0ULL, 1ULL, 77ULL}) {
    auto m = generate_mim_mask(512, 512, 0.6, 32, seed);
    EXPECT_EQ(m.mask.sizes(), (std::vector<std::int64_t>{1, 1, 512, 512}));
    EXPECT_EQ(m.masked_patches(), 154);
    EXPECT_EQ(m.mask.sum().item<double>(), 154.0 * 32 * 32);
  }
}

TEST(MimMask, ConstantPerPatchAndSeeded) {
  auto m = generate_mim_mask(128, 64, 0.5, 32, 3);
  auto blocks = m.mask.view({4, 32, 2, 32}).permute({0, 2, 1, 3}).reshape({8, -1});
  EXPECT_TRUE(torch::equal(blocks.amin(1), blocks.amax(1)));
  EXPECT_EQ(m.masked_patches(), 4);
  EXPECT_TRUE(torch::equal(m.mask, generate_mim_mask(128, 64, 0.5, 32, 3).mask));
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto t = generate_mim_mask(128, 64, 0.5, 32, s).mask.slice(2, 0, std::nullopt, 32).slice(3, 0, std::nullopt, 32);
    seen.insert(c10::str(t.flatten()));
  }
  EXPECT_GT(seen.size(), 5u);
}

TEST(MimMask, Errors) {
  EXPECT_THROW(generate_mim_mask(100, 64, 0.6, 32, 0), ShapeError);
  EXPECT_THROW(generate_mim_mask(64, 64, 1.5, 32, 0), ValueError);
}

TEST(ApplyMask, ZeroesMaskedPixels) {
  auto img = torch::rand({2, 3, 64, 64}) + 0.1;
  auto m = generate_mim_mask(64, 64, 0.5, 32, 1);
  auto masked = apply_mask(img, m.mask);
  EXPECT_TRUE(torch::equal(masked * m.mask, torch::zeros_like(img)));
  EXPECT_TRUE(torch::equal(masked * (1 - m.mask), img * (1 - m.mask)));
}

TEST(MimLoss, IgnoresUnmaskedPixels) {
  auto target = torch::rand({1, 3, 64, 64});
  auto recon = torch::rand({1, 3, 64, 64});
  auto m = generate_mim_mask(64, 64, 0.5, 32, 2);
  const auto a = mim_loss(target, recon, m.mask);
  auto noise = torch::randn({1, 3, 64, 64}) * (1 - m.mask);
  const auto b = mim_loss(target + noise, recon - noise * 3, m.mask);
  EXPECT_TRUE(torch::equal(a, b));
}

TEST(MimLoss, MeanOverMaskedElements) {
  auto target = torch::zeros({1, 3, 4, 4}, torch::kFloat64);
  auto recon = torch::zeros({1, 3, 4, 4}, torch::kFloat64);
  recon.index_put_({0, 0, 0, 0}, 6.0);
  recon.index_put_({0, 2, 3, 3}, 100.0);  // outside the mask
  auto m = torch::zeros({1, 1, 4, 4}, torch::kFloat64);
  m.index_put_({0, 0, 0, 0}, 1.0);
  m.index_put_({0, 0, 0, 1}, 1.0);
  // Masked elements: 2 pixels x 3 channels; their summed error is 6.
  EXPECT_DOUBLE_EQ(mim_loss(target, recon, m).item<double>(), 1.0);
  EXPECT_THROW(mim_loss(target, recon, torch::zeros({1, 1, 4, 4})), ValueError);
}

TEST(MimLoss, Gradient) {
  auto target = torch::rand({1, 3, 8, 8}, torch::kFloat64);
  auto recon = torch::rand({1, 3, 8, 8}, torch::kFloat64).requires_grad_(true);
  auto m = (torch::rand({1, 1, 8, 8}) > 0.5).to(torch::kFloat64);
  EXPECT_LT(gradcheck([&] { return mim_loss(target, recon, m); }, {recon}), 1e-4);
}

TEST(Heads, Shapes) {
  SegHead seg(16);
  auto s = seg->forward(torch::randn({2, 16, 2, 3}));
  EXPECT_EQ(s.sizes(), (std::vector<std::int64_t>{2, 1, 64, 96}));
  EXPECT_TRUE((s > 0).all().item<bool>() && (s < 1).all().item<bool>());
  ReconHead rec(8);
  EXPECT_EQ(rec->forward(torch::randn({1, 8, 16, 16})).sizes(), (std::vector<std::int64_t>{1, 3, 16, 16}));
  EXPECT_THROW(seg->forward(torch::randn({1, 8, 2, 2})), ShapeError);
}

TEST(Heads, SegHeadUnfoldsRowMajor) {
  SegHead seg(1);
  {
    torch::NoGradGuard ng;
    seg->proj->bias.zero_();
    for (int k = 0; k < 1024; ++k) seg->proj->weight[k][0][0][0] = static_cast<float>(k) / 1024.0f - 0.5f;
  }
  auto out = seg->forward(torch::ones({1, 1, 1, 1}));
  for (int k : {0, 1, 31, 32, 100, 1023}) {
    const float expect = 1.0f / (1.0f + std::exp(-(static_cast<float>(k) / 1024.0f - 0.5f)));
    EXPECT_NEAR(out[0][0][k / 32][k % 32].item<float>(), expect, 1e-6) << k;
  }
}

TEST(Pretrain, ForwardShapes) {
  torch::manual_seed(0);
  ViTEraser model(viteraser::testing::nano());
  auto m = generate_mim_mask(64, 64, 0.6, 32, 0);
  auto img = torch::rand({2, 3, 64, 64});
  auto out = model->pretrain_forward(apply_mask(img, m.mask), m.mask.expand({2, 1, 64, 64}));
  EXPECT_EQ(out.segmentation.sizes(), (std::vector<std::int64_t>{2, 1, 64, 64}));
  EXPECT_EQ(out.reconstruction.sizes(), (std::vector<std::int64_t>{2, 3, 64, 64}));
  auto loss = pretrain_loss(out.segmentation, torch::zeros({2, 1, 64, 64}), img, out.reconstruction, m.mask);
  EXPECT_NEAR(loss.total.item<double>(), loss.dice.item<double>() + loss.mim.item<double>(), 1e-6);
}

TEST(Rasterize, AxisAlignedBox) {
  auto m = rasterize_polygons(8, 10, {{2, 1, 6, 1, 6, 4, 2, 4}});
  EXPECT_EQ(m.sum().item<double>(), 4.0 * 3.0);
  EXPECT_EQ(m[0][1][2].item<float>(), 1.0f);
  EXPECT_EQ(m[0][3][5].item<float>(), 1.0f);
  EXPECT_EQ(m[0][4][5].item<float>(), 0.0f);
  EXPECT_EQ(m[0][1][6].item<float>(), 0.0f);
}

TEST(Rasterize, TriangleMatchesCentreSampling) {
  const Polygon tri{0, 0, 16, 0, 0, 16};
  auto m = rasterize_polygons(16, 16, {tri});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool inside = (x + 0.5) + (y + 0.5) < 16.0;
      EXPECT_EQ(m[0][y][x].item<float>(), inside ? 1.0f : 0.0f) << x << "," << y;
    }
  EXPECT_THROW(rasterize_polygons(4, 4, {{0, 0, 1, 1}}), DataError);
}
