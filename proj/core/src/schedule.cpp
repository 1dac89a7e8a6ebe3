#include "viteraser/schedule.hpp"

#include <cmath>
#include <numbers>

#include "viteraser/errors.hpp"

namespace viteraser {

std::string_view to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::kStrLinear: return "str_linear";
    case ScheduleMode::kPretrainStep: return "pretrain_step";
    case ScheduleMode::kFinetuneCosine: return "finetune_cosine";
  }
  return "?";
}

ScheduleMode parse_schedule_mode(std::string_view name) {
  if (name == "str_linear") return ScheduleMode::kStrLinear;
  if (name == "pretrain_step") return ScheduleMode::kPretrainStep;
  if (name == "finetune_cosine") return ScheduleMode::kFinetuneCosine;
  throw ConfigError("unknown schedule: '" + std::string(name) +
                    "' (expected str_linear, pretrain_step or finetune_cosine)");
}

Schedule str_schedule(std::int64_t epochs) {
  return {ScheduleMode::kStrLinear, 1e-4, 1e-5, epochs, 0};
}

Schedule pretrain_schedule(std::int64_t epochs) {
  return {ScheduleMode::kPretrainStep, 1e-4, 1e-5, epochs, 80};
}

Schedule finetune_schedule(std::int64_t epochs) {
  return {ScheduleMode::kFinetuneCosine, 0.00125, 0.0, epochs, 0};
}

double lr_at(const Schedule& s, std::int64_t epoch) {
  if (s.epochs <= 0) throw ValueError("schedule has no epochs");
  if (epoch < 0 || epoch >= s.epochs) {
    throw ValueError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(s.epochs) + ")");
  }
  switch (s.mode) {
    case ScheduleMode::kStrLinear: {
      if (s.epochs == 1) return s.base_lr;
      if (epoch == s.epochs - 1) return s.final_lr;
      const double t = static_cast<double>(epoch) / static_cast<double>(s.epochs - 1);
      return s.base_lr + (s.final_lr - s.base_lr) * t;
    }
    case ScheduleMode::kPretrainStep:
      return epoch < s.drop_epoch ? s.base_lr : s.final_lr;
    case ScheduleMode::kFinetuneCosine:
      return s.base_lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                         static_cast<double>(s.epochs))) / 2.0;
  }
  return s.base_lr;
}

}  // namespace viteraser
