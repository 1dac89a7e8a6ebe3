#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "viteraser/segmim.hpp"

namespace viteraser {

// One paired sample. input/target: (3, H, W) in [0, 1]; mask: (1, H, W) in {0, 1}.
struct TrainSample {
  torch::Tensor input;
  torch::Tensor target;
  torch::Tensor mask;
};

// image: (3, H, W); segmentation: (1, H, W) in {0, 1}.
struct PretrainSample {
  torch::Tensor image;
  torch::Tensor segmentation;
};

// Axis-aligned box in pixels, [x0, x1) x [y0, y1).
struct Box {
  std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct SynthSample {
  TrainSample sample;
  std::vector<Box> boxes;  // one tight box per text run
};

// Procedural background plus 1-5 stroke-glyph runs. All values are multiples
// of 1/255, so a PNG round trip is lossless. `size` must be a positive
// multiple of 32.
SynthSample synth_sample_with_boxes(std::uint64_t seed, std::int64_t size);
TrainSample synth_sample(std::uint64_t seed, std::int64_t size);

// Random-access sample sources.
class TrainSource {
 public:
  virtual ~TrainSource() = default;
  virtual std::size_t size() const = 0;
  virtual TrainSample get(std::size_t index) const = 0;
};

class PretrainSource {
 public:
  virtual ~PretrainSource() = default;
  virtual std::size_t size() const = 0;
  virtual PretrainSample get(std::size_t index) const = 0;
};

// Synthetic samples generated on demand: sample i uses derive_seed(seed, {i}).
class SynthSource : public TrainSource {
 public:
  SynthSource(std::size_t count, std::int64_t size, std::uint64_t seed);
  std::size_t size() const override { return count_; }
  TrainSample get(std::size_t index) const override;
  PretrainSample get_pretrain(std::size_t index) const;

 private:
  std::size_t count_;
  std::int64_t image_size_;
  std::uint64_t seed_;
};

class SynthPretrainSource : public PretrainSource {
 public:
  SynthPretrainSource(std::size_t count, std::int64_t size, std::uint64_t seed)
      : inner_(count, size, seed) {}
  std::size_t size() const override { return inner_.size(); }
  PretrainSample get(std::size_t index) const override { return inner_.get_pretrain(index); }

 private:
  SynthSource inner_;
};

// root/{image,label,mask}/NAME.png. Pixels are read lazily; counterparts are
// checked when the directory is opened.
class PairedDirDataset : public TrainSource {
 public:
  explicit PairedDirDataset(std::string root);
  std::size_t size() const override { return names_.size(); }
  TrainSample get(std::size_t index) const override;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::string root_;
  std::vector<std::string> names_;
};

PairedDirDataset load_paired_dir(const std::string& root);

// root/image/NAME.png with either root/annotation/STEM.txt (one polygon per
// line, comma- or space-separated x y pairs) or root/mask/NAME.png.
class PretrainDirDataset : public PretrainSource {
 public:
  explicit PretrainDirDataset(std::string root);
  std::size_t size() const override { return names_.size(); }
  PretrainSample get(std::size_t index) const override;

 private:
  std::string root_;
  std::vector<std::string> names_;
  bool use_annotations_ = false;
};

std::vector<Polygon> parse_annotation(const std::string& text);

// Permutation of [0, n) that depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

// Batch index lists for one epoch; the last partial batch wraps around to
// the start of the order.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size);

TrainSample hflip(const TrainSample& sample);
// Resize to `size` x `size`: bilinear for images, nearest for masks. No-op
// when the sample already has that size.
TrainSample resize_to(const TrainSample& sample, std::int64_t size);
PretrainSample resize_to(const PretrainSample& sample, std::int64_t size);
// Same random horizontal flip for all three tensors, then resize to
// `size` x `size` (bilinear images, nearest mask).
TrainSample augment(const TrainSample& sample, std::uint64_t seed, std::int64_t size);
PretrainSample augment(const PretrainSample& sample, std::uint64_t seed, std::int64_t size);

// Stacks samples into (B, C, H, W) batches.
TrainSample collate(const std::vector<TrainSample>& samples);
PretrainSample collate(const std::vector<PretrainSample>& samples);

// Writes image/label/mask PNGs and annotation/STEM.txt under `root`.
void write_synth_sample(const std::string& root, const std::string& name, const SynthSample& sample);

}  // namespace viteraser
