#include <gtest/gtest.h>

#include "test_support.hpp"
#include "viteraser/discriminator.hpp"
#include "viteraser/errors.hpp"

using namespace viteraser;
using viteraser::testing::gradcheck;

namespace {

double top_singular_value(const torch::Tensor& m) {
  return torch::linalg_svdvals(m.to(torch::kFloat64))[0].item<double>();
}

}  // namespace

TEST(SpectralNorm, ConvergesToUnitSigma) {
  torch::manual_seed(0);
  SNConv2d conv(4, 8, 5, 2, 2);
  conv->train();
  for (int i = 0; i < 50; ++i) conv->forward(torch::randn({1, 4, 8, 8}));
  const auto w = conv->normalized_weight().detach();
  const double sigma = top_singular_value(w.reshape({w.size(0), -1}));
  EXPECT_GT(sigma, 0.9);
  EXPECT_LT(sigma, 1.1);
}

TEST(SpectralNorm, TransposedUsesOutputChannelAxis) {
  torch::manual_seed(1);
  SNConvTranspose2d deconv(6, 5, 3, 2, 1, 1);
  deconv->train();
  for (int i = 0; i < 50; ++i) deconv->forward(torch::randn({1, 6, 4, 4}));
  const auto w = deconv->normalized_weight().detach().transpose(0, 1);
  const double sigma = top_singular_value(w.reshape({w.size(0), -1}));
  EXPECT_NEAR(sigma, 1.0, 0.1);
  EXPECT_EQ(deconv->forward(torch::randn({1, 6, 4, 4})).sizes(), (std::vector<std::int64_t>{1, 5, 8, 8}));
}

TEST(SpectralNorm, EvalModeFreezesEstimate) {
  SNConv2d conv(3, 4, 3, 1, 1);
  conv->eval();
  auto x = torch::randn({1, 3, 6, 6});
  auto a = conv->forward(x), b = conv->forward(x);
  EXPECT_TRUE(torch::equal(a, b));
}

TEST(SpectralNorm, ZeroWeightStaysFinite) {
  SNConv2d conv(3, 4, 3, 1, 1);
  {
    torch::NoGradGuard ng;
    conv->weight.zero_();
  }
  auto y = conv->forward(torch::randn({1, 3, 6, 6}));
  EXPECT_TRUE(torch::isfinite(y).all().item<bool>());
}

TEST(Discriminator, Architecture) {
  Discriminator d;
  const std::int64_t widths[] = {64, 128, 256, 256, 256, 1};
  std::int64_t in = 4;
  ASSERT_EQ(d->layers().size(), 6u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(d->layers()[i]->weight.sizes(), (std::vector<std::int64_t>{widths[i], in, 5, 5}));
    EXPECT_EQ(d->layers()[i]->stride, 2);
    in = widths[i];
  }
}

TEST(Discriminator, ScoresInOpenUnitRange) {
  torch::manual_seed(2);
  Discriminator d;
  auto s = d->forward(torch::rand({3, 3, 64, 64}), torch::ones({3, 1, 64, 64}));
  EXPECT_EQ(s.sizes(), (std::vector<std::int64_t>{3}));
  EXPECT_TRUE((s > -1).all().item<bool>());
  EXPECT_TRUE((s < 1).all().item<bool>());
}

TEST(Discriminator, MaskConditions) {
  torch::manual_seed(3);
  Discriminator d;
  d->eval();
  auto img = torch::rand({1, 3, 64, 64});
  EXPECT_FALSE(torch::equal(d->forward(img, torch::zeros({1, 1, 64, 64})), d->forward(img, torch::ones({1, 1, 64, 64}))));
}

TEST(Discriminator, Misaligned) {
  Discriminator d;
  EXPECT_THROW(d->forward(torch::rand({1, 3, 64, 64}), torch::ones({1, 1, 32, 32})), ShapeError);
  EXPECT_THROW(d->forward(torch::rand({2, 3, 64, 64}), torch::ones({1, 1, 64, 64})), ShapeError);
}

TEST(Discriminator, GradientInEvalMode) {
  torch::manual_seed(4);
  Discriminator d;
  d->to(torch::kFloat64);
  d->eval();
  auto img = torch::rand({1, 3, 16, 16}, torch::kFloat64).requires_grad_(true);
  auto mask = torch::zeros({1, 1, 16, 16}, torch::kFloat64);
  mask.slice(2, 4, 10).fill_(1.0);
  std::vector<torch::Tensor> wrt{img};
  for (auto& l : d->layers()) wrt.push_back(l->weight);
  EXPECT_LT(gradcheck([&] { return d->forward(img, mask).sum(); }, wrt, 1e-6, 16), 1e-4);
}
