#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "test_support.hpp"
#include "viteraser/data.hpp"
#include "viteraser/errors.hpp"
#include "viteraser/image_io.hpp"

using namespace viteraser;

TEST(Synth, ShapesAndRange) {
  auto s = synth_sample(3, 64);
  EXPECT_EQ(s.input.sizes(), (std::vector<std::int64_t>{3, 64, 64}));
  EXPECT_EQ(s.target.sizes(), (std::vector<std::int64_t>{3, 64, 64}));
  EXPECT_EQ(s.mask.sizes(), (std::vector<std::int64_t>{1, 64, 64}));
  EXPECT_GE(s.input.min().item<float>(), 0.0f);
  EXPECT_LE(s.input.max().item<float>(), 1.0f);
  EXPECT_TRUE(torch::equal(s.mask, s.mask.gt(0.5).to(torch::kFloat32)));
  EXPECT_THROW(synth_sample(0, 48), ValueError);
}

TEST(Synth, InputEqualsTargetOutsideMask) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = synth_sample(seed, 64);
    auto outside = (1 - s.mask).expand_as(s.input);
    EXPECT_TRUE(torch::equal(s.input * outside, s.target * outside)) << seed;
  }
}

TEST(Synth, TextChangesPixelsInsideEveryBox) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = synth_sample_with_boxes(seed, 64);
    ASSERT_FALSE(s.boxes.empty());
    for (const auto& b : s.boxes) {
      ASSERT_LT(b.x0, b.x1);
      ASSERT_LT(b.y0, b.y1);
      using torch::indexing::Slice;
      auto in = s.sample.input.index({Slice(), Slice(b.y0, b.y1), Slice(b.x0, b.x1)});
      auto gt = s.sample.target.index({Slice(), Slice(b.y0, b.y1), Slice(b.x0, b.x1)});
      EXPECT_FALSE(torch::equal(in, gt)) << seed;
      auto m = s.sample.mask.index({0, Slice(b.y0, b.y1), Slice(b.x0, b.x1)});
      EXPECT_TRUE(m.eq(1).all().item<bool>());
    }
  }
}

TEST(Synth, Deterministic) {
  auto a = synth_sample(42, 64), b = synth_sample(42, 64), c = synth_sample(43, 64);
  EXPECT_TRUE(torch::equal(a.input, b.input));
  EXPECT_TRUE(torch::equal(a.mask, b.mask));
  EXPECT_FALSE(torch::equal(a.input, c.input));
}

TEST(Synth, SourcesAgree) {
  SynthSource src(4, 64, 9);
  SynthPretrainSource pre(4, 64, 9);
  EXPECT_EQ(src.size(), 4u);
  auto t = src.get(2);
  auto p = pre.get(2);
  EXPECT_TRUE(torch::equal(t.input, p.image));
  EXPECT_TRUE(torch::equal(t.mask, p.segmentation));
}

TEST(Batching, EpochOrderIsPermutation) {
  auto a = epoch_order(10, 1, 0), b = epoch_order(10, 1, 0), c = epoch_order(10, 1, 1);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  std::set<std::size_t> seen(a.begin(), a.end());
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(*seen.rbegin(), 9u);
}

TEST(Batching, LastBatchWraps) {
  std::vector<std::size_t> order{4, 3, 2, 1, 0};
  auto batches = make_batches(order, 2);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[2], (std::vector<std::size_t>{0, 4}));
  EXPECT_THROW(make_batches(order, 0), ValueError);
}

TEST(Augment, FlipAndResize) {
  auto s = synth_sample(1, 64);
  auto f = hflip(s);
  EXPECT_TRUE(torch::equal(f.input, s.input.flip({2})));
  EXPECT_TRUE(torch::equal(hflip(f).mask, s.mask));
  auto r = resize_to(s, 32);
  EXPECT_EQ(r.input.sizes(), (std::vector<std::int64_t>{3, 32, 32}));
  EXPECT_TRUE(torch::equal(r.mask, r.mask.gt(0.5).to(torch::kFloat32)));
  EXPECT_TRUE(torch::equal(resize_to(s, 64).input, s.input));
  auto a = augment(s, 5, 64), b = augment(s, 5, 64);
  EXPECT_TRUE(torch::equal(a.input, b.input));
  int flips = 0;
  for (std::uint64_t seed = 0; seed < 32; ++seed) flips += torch::equal(augment(s, seed, 64).input, s.input) ? 0 : 1;
  EXPECT_GT(flips, 4);
  EXPECT_LT(flips, 28);
}

TEST(Collate, Stacks) {
  auto b = collate(std::vector<TrainSample>{synth_sample(1, 32), synth_sample(2, 32)});
  EXPECT_EQ(b.input.sizes(), (std::vector<std::int64_t>{2, 3, 32, 32}));
  EXPECT_EQ(b.mask.sizes(), (std::vector<std::int64_t>{2, 1, 32, 32}));
}

TEST(Annotation, Parse) {
  auto polys = parse_annotation("10,20,30,20,30,40,10,40,HELLO\n\n1 2 3 4\n0,0,5,0,5,5,###\n");
  ASSERT_EQ(polys.size(), 3u);
  EXPECT_EQ(polys[0], (Polygon{10, 20, 30, 20, 30, 40, 10, 40}));
  EXPECT_EQ(polys[1], (Polygon{1, 2, 3, 2, 3, 4, 1, 4}));
  EXPECT_EQ(polys[2].size(), 6u);
}

TEST(PairedDir, RoundTripThroughFiles) {
  viteraser::testing::TempDir dir("paired");
  auto s1 = synth_sample_with_boxes(1, 64), s2 = synth_sample_with_boxes(2, 64);
  write_synth_sample(dir.str(), "b", s2);
  write_synth_sample(dir.str(), "a", s1);
  PairedDirDataset ds(dir.str());
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.names(), (std::vector<std::string>{"a.png", "b.png"}));
  auto got = ds.get(0);
  EXPECT_TRUE(torch::equal(got.input, s1.sample.input));
  EXPECT_TRUE(torch::equal(got.target, s1.sample.target));
  EXPECT_TRUE(torch::equal(got.mask, s1.sample.mask));

  PretrainDirDataset pre(dir.str());
  ASSERT_EQ(pre.size(), 2u);
  // Annotations hold the tight text boxes, so the rasterized map equals the mask.
  EXPECT_TRUE(torch::equal(pre.get(1).segmentation, s2.sample.mask));
}

TEST(PairedDir, MissingCounterpartNamesFile) {
  viteraser::testing::TempDir dir("paired-missing");
  write_synth_sample(dir.str(), "a", synth_sample_with_boxes(1, 32));
  std::filesystem::remove(dir.path / "label" / "a.png");
  try {
    PairedDirDataset ds(dir.str());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("a.png"), std::string::npos);
  }
}

TEST(PairedDir, EmptyRootIsEmpty) {
  viteraser::testing::TempDir dir("paired-empty");
  std::filesystem::create_directories(dir.path / "image");
  std::filesystem::create_directories(dir.path / "label");
  std::filesystem::create_directories(dir.path / "mask");
  EXPECT_EQ(PairedDirDataset(dir.str()).size(), 0u);
}
