#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "viteraser/checkpoint.hpp"
#include "viteraser/config.hpp"
#include "viteraser/data.hpp"
#include "viteraser/discriminator.hpp"
#include "viteraser/kv.hpp"
#include "viteraser/losses.hpp"
#include "viteraser/model.hpp"
#include "viteraser/schedule.hpp"

namespace viteraser {

enum class TrainMode { kStr, kPretrain, kFinetuneEncoder };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  std::int64_t epochs = 1;
  std::int64_t batch_size = 4;
  ScheduleMode schedule = ScheduleMode::kStrLinear;
  double lr = 1e-4;
  double lr_final = 1e-5;
  std::int64_t lr_drop_epoch = 80;
  double weight_decay = 0.05;
  std::array<double, 2> adam_betas{0.9, 0.999};
  std::uint64_t seed = 0;
  LossWeights loss;
  double mask_ratio = 0.6;
  std::int64_t mask_patch = 32;
  std::array<std::int64_t, 3> extractor_widths{16, 32, 64};
  // Optional weights file for the perceptual feature extractor; empty means
  // random weights seeded from `seed`.
  std::string extractor_weights;
  bool augment = true;

  Schedule make_schedule() const;
  bool operator==(const TrainConfig&) const = default;
};

// Default schedule for each stage: STR (linear 1e-4 -> 1e-5), pretraining
// (100 epochs, step drop at 80), encoder finetuning (20 epochs, cosine from
// 0.00125).
TrainConfig default_train_config(TrainMode mode);

const std::vector<std::string>& train_config_keys();
KvDocument to_kv(const TrainConfig& config);
TrainConfig apply_kv(TrainConfig base, const KvDocument& doc, bool ignore_unknown = false);

struct StepLosses {
  double msr = 0, per = 0, sty = 0, seg = 0, adv = 0;  // generator terms
  double discriminator = 0;
  double total = 0;
};

struct PretrainLosses {
  double dice = 0;
  double mim = 0;  // 0 in encoder-finetune mode
  double total = 0;
};

struct TrainProgress {
  std::int64_t epoch = 0;
  std::int64_t step_in_epoch = 0;
  std::int64_t global_step = 0;
};

// Owns the models, optimizers and position for one training stage. All
// randomness is a function of (seed, epoch, step, sample), so a run resumed
// from a checkpoint continues exactly as the uninterrupted run would.
class Trainer {
 public:
  Trainer(const ModelConfig& model_config, const TrainConfig& train_config, TrainMode mode);

  // One D update (hinge) followed by one G update on the weighted total.
  StepLosses train_step(const TrainSample& batch);
  // SegMIM step; mask i is drawn from mask_seeds[i].
  PretrainLosses pretrain_step(const PretrainSample& batch, const std::vector<std::uint64_t>& mask_seeds);
  // Encoder + segmentation head only, dice objective, no mask token.
  PretrainLosses finetune_step(const PretrainSample& batch);

  // Runs the remaining steps of the current epoch, appending one JSON line
  // per step to `log` when given. Returns false when all epochs are done.
  // At most `max_steps` steps are run when it is non-negative.
  bool run_epoch(const TrainSource* str_data, const PretrainSource* pre_data, std::ostream* log,
                 std::int64_t max_steps = -1);
  // Epoch loop with a checkpoint at `checkpoint_path` after each epoch.
  void fit(const TrainSource* str_data, const PretrainSource* pre_data, std::ostream* log,
           const std::string& checkpoint_path, const std::function<void(const TrainProgress&)>& on_epoch = {});

  // Applies the scheduled learning rate for the current epoch.
  void apply_lr();
  double current_lr() const;

  Checkpoint snapshot() const;
  void save(const std::string& path) const;
  // Restores a snapshot. Returns warnings (e.g. config differences); throws
  // CheckpointError on incompatible state.
  std::vector<std::string> restore(const Checkpoint& ckpt);
  std::vector<std::string> load(const std::string& path);
  // Loads generator weights only (for example pretrained weights before STR
  // training). Tensors missing from the checkpoint are left untouched.
  void load_generator_weights(const Checkpoint& ckpt);

  ViTEraser& model() { return model_; }
  Discriminator& discriminator() { return disc_; }
  const ModelConfig& model_config() const { return model_config_; }
  const TrainConfig& train_config() const { return train_config_; }
  TrainMode mode() const { return mode_; }
  const TrainProgress& progress() const { return progress_; }
  std::size_t steps_per_epoch(std::size_t samples) const;

 private:
  PretrainSample load_pretrain_batch(const PretrainSource& data, const std::vector<std::size_t>& idx,
                                     std::vector<std::uint64_t>& mask_seeds) const;
  TrainSample load_train_batch(const TrainSource& data, const std::vector<std::size_t>& idx) const;

  ModelConfig model_config_;
  TrainConfig train_config_;
  TrainMode mode_;
  ViTEraser model_{nullptr};
  Discriminator disc_{nullptr};
  FeatureExtractor extractor_{nullptr};
  std::vector<torch::Tensor> gen_params_;
  std::unique_ptr<torch::optim::AdamW> gen_opt_;
  std::unique_ptr<torch::optim::AdamW> disc_opt_;
  TrainProgress progress_;
};

// Shared model and trainer key sets in one flat document. The optional key
// `preset` selects the base model configuration.
struct ResolvedConfig {
  ModelConfig model;
  TrainConfig train;
  std::string preset;
};
ResolvedConfig resolve_config(const KvDocument& doc, TrainMode mode);
KvDocument to_kv(const ResolvedConfig& config);

// Generator-only checkpoint loading for inference.
ViTEraser load_generator(const std::string& path);

}  // namespace viteraser
