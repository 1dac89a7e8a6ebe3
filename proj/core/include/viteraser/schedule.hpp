#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace viteraser {

enum class ScheduleMode { kStrLinear, kPretrainStep, kFinetuneCosine };

std::string_view to_string(ScheduleMode mode);
ScheduleMode parse_schedule_mode(std::string_view name);

// Per-epoch learning rate.
//   str_linear:      base_lr at epoch 0, linear to final_lr at the last epoch
//   pretrain_step:   base_lr before drop_epoch, final_lr from it on
//   finetune_cosine: base_lr * (1 + cos(pi * epoch / epochs)) / 2
struct Schedule {
  ScheduleMode mode = ScheduleMode::kStrLinear;
  double base_lr = 1e-4;
  double final_lr = 1e-5;
  std::int64_t epochs = 1;
  std::int64_t drop_epoch = 80;
};

Schedule str_schedule(std::int64_t epochs);
Schedule pretrain_schedule(std::int64_t epochs = 100);
Schedule finetune_schedule(std::int64_t epochs = 20);

// Throws ValueError unless 0 <= epoch < schedule.epochs.
double lr_at(const Schedule& schedule, std::int64_t epoch);

}  // namespace viteraser
