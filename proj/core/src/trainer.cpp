#include "viteraser/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <json.hpp>

#include "viteraser/errors.hpp"
#include "viteraser/random.hpp"
#include "viteraser/segmim.hpp"

namespace viteraser {
namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kExtractorStream = 2;
constexpr std::uint64_t kAugmentStream = 3;
constexpr std::uint64_t kMaskStream = 4;

std::array<double, 3> parse_triple(const std::string& key, const std::string& value) {
  const auto v = kv::parse_double_list(key, value);
  if (v.size() != 3) throw ConfigError(key + ": expected 3 comma-separated numbers");
  return {v[0], v[1], v[2]};
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

void validate_train_config(const TrainConfig& t, const ModelConfig& m) {
  std::vector<std::string> errors;
  if (t.epochs <= 0) errors.push_back("epochs must be positive");
  if (t.batch_size <= 0) errors.push_back("batch_size must be positive");
  if (!(t.lr > 0.0)) errors.push_back("lr must be positive");
  if (t.lr_final < 0.0) errors.push_back("lr_final must be non-negative");
  if (t.weight_decay < 0.0) errors.push_back("weight_decay must be non-negative");
  if (!(t.mask_ratio >= 0.0 && t.mask_ratio <= 1.0)) errors.push_back("mask_ratio must be in [0, 1]");
  if (t.mask_patch <= 0 || m.input_size % t.mask_patch != 0) {
    errors.push_back("mask_patch must divide input_size");
  }
  for (auto w : t.extractor_widths) {
    if (w <= 0) errors.push_back("extractor_widths must be positive");
  }
  if (!errors.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

void copy_into(const torch::Tensor& dst, const torch::Tensor& src, const std::string& name) {
  if (!dst.sizes().equals(src.sizes())) {
    throw CheckpointError("tensor '" + name + "' has shape " + c10::str(src.sizes()) +
                          " in the checkpoint but " + c10::str(dst.sizes()) + " in the model");
  }
  torch::NoGradGuard guard;
  dst.copy_(src);
}

void store_module(const torch::nn::Module& module, const std::string& prefix, Checkpoint& ckpt) {
  for (const auto& item : module.named_parameters(true)) {
    ckpt.tensors[prefix + item.key()] = item.value().detach().clone();
  }
  for (const auto& item : module.named_buffers(true)) {
    ckpt.tensors[prefix + item.key()] = item.value().detach().clone();
  }
}

void restore_module(torch::nn::Module& module, const std::string& prefix, const Checkpoint& ckpt,
                    bool require_all) {
  auto restore = [&](const std::string& key, const torch::Tensor& dst) {
    const auto it = ckpt.tensors.find(prefix + key);
    if (it == ckpt.tensors.end()) {
      if (require_all) throw CheckpointError("checkpoint is missing tensor '" + prefix + key + "'");
      return;
    }
    copy_into(dst, it->second, prefix + key);
  };
  for (const auto& item : module.named_parameters(true)) restore(item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) restore(item.key(), item.value());
}

void store_optimizer(torch::optim::AdamW& opt, const std::vector<torch::Tensor>& params,
                     const std::string& prefix, Checkpoint& ckpt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = opt.state().find(params[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    const auto& st = static_cast<const torch::optim::AdamWParamState&>(*it->second);
    const auto base = prefix + std::to_string(i) + "/";
    ckpt.tensors[base + "step"] = torch::tensor(st.step(), torch::kInt64);
    ckpt.tensors[base + "exp_avg"] = st.exp_avg().detach().clone();
    ckpt.tensors[base + "exp_avg_sq"] = st.exp_avg_sq().detach().clone();
  }
}

void restore_optimizer(torch::optim::AdamW& opt, const std::vector<torch::Tensor>& params,
                       const std::string& prefix, const Checkpoint& ckpt) {
  opt.state().clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto base = prefix + std::to_string(i) + "/";
    const auto step = ckpt.tensors.find(base + "step");
    if (step == ckpt.tensors.end()) continue;
    const auto avg = ckpt.tensors.find(base + "exp_avg");
    const auto avg_sq = ckpt.tensors.find(base + "exp_avg_sq");
    if (avg == ckpt.tensors.end() || avg_sq == ckpt.tensors.end()) {
      throw CheckpointError("incomplete optimizer state for '" + base + "'");
    }
    if (!avg->second.sizes().equals(params[i].sizes()) || !avg_sq->second.sizes().equals(params[i].sizes())) {
      throw CheckpointError("optimizer state '" + base + "' does not match parameter shape");
    }
    auto st = std::make_unique<torch::optim::AdamWParamState>();
    st->step(step->second.item<std::int64_t>());
    st->exp_avg(avg->second.clone().to(params[i].dtype()));
    st->exp_avg_sq(avg_sq->second.clone().to(params[i].dtype()));
    opt.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
  }
}

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  }
}

double require_finite(const torch::Tensor& t, const char* name) {
  const double v = t.item<double>();
  if (!std::isfinite(v)) throw NonFiniteLossError(name);
  return v;
}

void set_requires_grad(torch::nn::Module& module, bool on) {
  for (auto& p : module.parameters()) p.requires_grad_(on);
}

std::string meta_get(const Checkpoint& ckpt, const std::string& key) {
  const auto it = ckpt.metadata.find(key);
  if (it == ckpt.metadata.end()) throw CheckpointError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

std::int64_t meta_int(const Checkpoint& ckpt, const std::string& key) {
  try {
    return std::stoll(meta_get(ckpt, key));
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint metadata '" + key + "' is not an integer");
  }
}

}  // namespace

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kStr: return "train";
    case TrainMode::kPretrain: return "pretrain";
    case TrainMode::kFinetuneEncoder: return "finetune-encoder";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "train") return TrainMode::kStr;
  if (name == "pretrain") return TrainMode::kPretrain;
  if (name == "finetune-encoder") return TrainMode::kFinetuneEncoder;
  throw ConfigError("unknown training mode: '" + std::string(name) + "'");
}

Schedule TrainConfig::make_schedule() const {
  return {schedule, lr, lr_final, epochs, lr_drop_epoch};
}

TrainConfig default_train_config(TrainMode mode) {
  TrainConfig t;
  switch (mode) {
    case TrainMode::kStr: {
      const auto s = str_schedule(t.epochs);
      t.schedule = s.mode;
      t.lr = s.base_lr;
      t.lr_final = s.final_lr;
      break;
    }
    case TrainMode::kPretrain: {
      const auto s = pretrain_schedule();
      t.schedule = s.mode;
      t.epochs = s.epochs;
      t.lr = s.base_lr;
      t.lr_final = s.final_lr;
      t.lr_drop_epoch = s.drop_epoch;
      break;
    }
    case TrainMode::kFinetuneEncoder: {
      const auto s = finetune_schedule();
      t.schedule = s.mode;
      t.epochs = s.epochs;
      t.lr = s.base_lr;
      t.lr_final = s.final_lr;
      break;
    }
  }
  return t;
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "epochs",      "batch_size",  "schedule",    "lr",         "lr_final",   "lr_drop_epoch",
      "weight_decay", "adam_betas", "seed",        "alpha_msr",  "alpha_per",  "alpha_sty",
      "alpha_seg",   "alpha_adv",   "msr_lambda",  "msr_beta",   "mask_ratio", "mask_patch",
      "extractor_widths", "extractor_weights", "augment"};
  return keys;
}

KvDocument to_kv(const TrainConfig& t) {
  KvDocument doc;
  doc.set("epochs", std::to_string(t.epochs));
  doc.set("batch_size", std::to_string(t.batch_size));
  doc.set("schedule", std::string(to_string(t.schedule)));
  doc.set("lr", kv::format_double(t.lr));
  doc.set("lr_final", kv::format_double(t.lr_final));
  doc.set("lr_drop_epoch", std::to_string(t.lr_drop_epoch));
  doc.set("weight_decay", kv::format_double(t.weight_decay));
  doc.set("adam_betas", kv::join_doubles(t.adam_betas));
  doc.set("seed", std::to_string(t.seed));
  doc.set("alpha_msr", kv::format_double(t.loss.alpha_msr));
  doc.set("alpha_per", kv::format_double(t.loss.alpha_per));
  doc.set("alpha_sty", kv::format_double(t.loss.alpha_sty));
  doc.set("alpha_seg", kv::format_double(t.loss.alpha_seg));
  doc.set("alpha_adv", kv::format_double(t.loss.alpha_adv));
  doc.set("msr_lambda", kv::join_doubles(t.loss.lambda));
  doc.set("msr_beta", kv::join_doubles(t.loss.beta));
  doc.set("mask_ratio", kv::format_double(t.mask_ratio));
  doc.set("mask_patch", std::to_string(t.mask_patch));
  doc.set("extractor_widths", kv::join_ints(t.extractor_widths));
  doc.set("extractor_weights", t.extractor_weights);
  doc.set("augment", t.augment ? "true" : "false");
  return doc;
}

TrainConfig apply_kv(TrainConfig t, const KvDocument& doc, bool ignore_unknown) {
  for (const auto& [key, value] : doc.entries()) {
    if (key == "epochs") {
      t.epochs = kv::parse_int(key, value);
    } else if (key == "batch_size") {
      t.batch_size = kv::parse_int(key, value);
    } else if (key == "schedule") {
      t.schedule = parse_schedule_mode(value);
    } else if (key == "lr") {
      t.lr = kv::parse_double(key, value);
    } else if (key == "lr_final") {
      t.lr_final = kv::parse_double(key, value);
    } else if (key == "lr_drop_epoch") {
      t.lr_drop_epoch = kv::parse_int(key, value);
    } else if (key == "weight_decay") {
      t.weight_decay = kv::parse_double(key, value);
    } else if (key == "adam_betas") {
      const auto v = kv::parse_double_list(key, value);
      if (v.size() != 2) throw ConfigError(key + ": expected 2 comma-separated numbers");
      t.adam_betas = {v[0], v[1]};
    } else if (key == "seed") {
      const auto s = kv::parse_int(key, value);
      if (s < 0) throw ConfigError("seed must be non-negative");
      t.seed = static_cast<std::uint64_t>(s);
    } else if (key == "alpha_msr") {
      t.loss.alpha_msr = kv::parse_double(key, value);
    } else if (key == "alpha_per") {
      t.loss.alpha_per = kv::parse_double(key, value);
    } else if (key == "alpha_sty") {
      t.loss.alpha_sty = kv::parse_double(key, value);
    } else if (key == "alpha_seg") {
      t.loss.alpha_seg = kv::parse_double(key, value);
    } else if (key == "alpha_adv") {
      t.loss.alpha_adv = kv::parse_double(key, value);
    } else if (key == "msr_lambda") {
      t.loss.lambda = parse_triple(key, value);
    } else if (key == "msr_beta") {
      t.loss.beta = parse_triple(key, value);
    } else if (key == "mask_ratio") {
      t.mask_ratio = kv::parse_double(key, value);
    } else if (key == "mask_patch") {
      t.mask_patch = kv::parse_int(key, value);
    } else if (key == "extractor_widths") {
      const auto v = kv::parse_int_list(key, value);
      if (v.size() != 3) throw ConfigError(key + ": expected 3 comma-separated integers");
      t.extractor_widths = {v[0], v[1], v[2]};
    } else if (key == "extractor_weights") {
      t.extractor_weights = value;
    } else if (key == "augment") {
      t.augment = parse_bool(key, value);
    } else if (!ignore_unknown) {
      throw ConfigError("unknown config key: " + key);
    }
  }
  return t;
}

ResolvedConfig resolve_config(const KvDocument& doc, TrainMode mode) {
  ResolvedConfig r;
  r.preset = doc.get("preset").value_or("nano");
  const auto& mk = model_config_keys();
  const auto& tk = train_config_keys();
  for (const auto& [key, _] : doc.entries()) {
    if (key != "preset" && std::find(mk.begin(), mk.end(), key) == mk.end() &&
        std::find(tk.begin(), tk.end(), key) == tk.end()) {
      throw ConfigError("unknown config key: " + key);
    }
  }
  r.model = apply_kv(preset(r.preset), doc, /*ignore_unknown=*/true);
  r.train = apply_kv(default_train_config(mode), doc, /*ignore_unknown=*/true);
  require_valid(r.model);
  validate_train_config(r.train, r.model);
  return r;
}

KvDocument to_kv(const ResolvedConfig& config) {
  KvDocument doc;
  doc.set("preset", config.preset);
  const auto model = to_kv(config.model);
  const auto train = to_kv(config.train);
  for (const auto& [k, v] : model.entries()) doc.set(k, v);
  for (const auto& [k, v] : train.entries()) doc.set(k, v);
  return doc;
}

Trainer::Trainer(const ModelConfig& model_config, const TrainConfig& train_config, TrainMode mode)
    : model_config_(model_config), train_config_(train_config), mode_(mode) {
  require_valid(model_config_);
  validate_train_config(train_config_, model_config_);
  torch::manual_seed(derive_seed(train_config_.seed, {kInitStream}));
  model_ = ViTEraser(model_config_);

  switch (mode_) {
    case TrainMode::kStr: {
      disc_ = Discriminator();
      extractor_ = train_config_.extractor_weights.empty()
                       ? FeatureExtractor(train_config_.extractor_widths,
                                          derive_seed(train_config_.seed, {kExtractorStream}))
                       : FeatureExtractor(FeatureExtractorImpl::from_file(train_config_.extractor_weights));
      gen_params_ = model_->encoder_parameters();
      for (auto& p : model_->decoder_parameters()) gen_params_.push_back(p);
      break;
    }
    case TrainMode::kPretrain:
      gen_params_ = model_->parameters();
      break;
    case TrainMode::kFinetuneEncoder:
      gen_params_ = model_->encoder_parameters();
      for (auto& p : model_->seg_head->parameters()) gen_params_.push_back(p);
      break;
  }

  auto options = torch::optim::AdamWOptions(train_config_.lr)
                     .betas({train_config_.adam_betas[0], train_config_.adam_betas[1]})
                     .weight_decay(train_config_.weight_decay);
  gen_opt_ = std::make_unique<torch::optim::AdamW>(gen_params_, options);
  if (mode_ == TrainMode::kStr) disc_opt_ = std::make_unique<torch::optim::AdamW>(disc_->parameters(), options);
  apply_lr();
}

double Trainer::current_lr() const {
  const auto epoch = std::min(progress_.epoch, train_config_.epochs - 1);
  return lr_at(train_config_.make_schedule(), epoch);
}

void Trainer::apply_lr() {
  const double lr = current_lr();
  set_lr(*gen_opt_, lr);
  if (disc_opt_) set_lr(*disc_opt_, lr);
}

StepLosses Trainer::train_step(const TrainSample& batch) {
  if (mode_ != TrainMode::kStr) throw Error("train_step requires the train mode");
  const auto& w = train_config_.loss;
  model_->train();
  disc_->train();
  auto out = model_->forward(batch.input, /*auxiliary=*/true);
  StepLosses losses;

  // Discriminator update on the detached output.
  set_requires_grad(*disc_, true);
  const auto d_real = disc_->forward(batch.target, batch.mask);
  const auto d_fake = disc_->forward(out.image.detach(), batch.mask);
  const auto adv = adversarial_losses(d_real, d_fake);
  losses.discriminator = require_finite(adv.discriminator, "adv_d");
  disc_opt_->zero_grad();
  adv.discriminator.backward();
  disc_opt_->step();

  // Generator update against a frozen discriminator.
  disc_->eval();
  set_requires_grad(*disc_, false);
  const auto d_fake_g = disc_->forward(out.image, batch.mask);
  LossParts parts;
  parts.msr = msr_loss({out.image, out.aux->image_half, out.aux->image_quarter}, batch.target, batch.mask, w);
  const auto composite = composite_image(out.image, batch.input, batch.mask);
  const auto ps = perceptual_style_losses(out.image, composite, batch.target, extractor_);
  parts.per = ps.perceptual;
  parts.sty = ps.style;
  parts.seg = dice_loss(out.aux->mask, batch.mask);
  parts.adv = -d_fake_g.mean();
  const auto total = total_loss(parts, w);
  gen_opt_->zero_grad();
  total.backward();
  gen_opt_->step();
  set_requires_grad(*disc_, true);
  disc_->train();

  losses.msr = parts.msr.item<double>();
  losses.per = parts.per.item<double>();
  losses.sty = parts.sty.item<double>();
  losses.seg = parts.seg.item<double>();
  losses.adv = parts.adv.item<double>();
  losses.total = total.item<double>();
  return losses;
}

PretrainLosses Trainer::pretrain_step(const PretrainSample& batch, const std::vector<std::uint64_t>& mask_seeds) {
  if (mode_ != TrainMode::kPretrain) throw Error("pretrain_step requires the pretrain mode");
  const auto b = batch.image.size(0);
  if (static_cast<std::int64_t>(mask_seeds.size()) != b) {
    throw ValueError("pretrain_step: one mask seed per sample is required");
  }
  std::vector<torch::Tensor> masks;
  for (const auto seed : mask_seeds) {
    masks.push_back(generate_mim_mask(batch.image.size(2), batch.image.size(3), train_config_.mask_ratio,
                                      train_config_.mask_patch, seed)
                        .mask);
  }
  const auto mask = torch::cat(masks, 0);
  model_->train();
  const auto out = model_->pretrain_forward(apply_mask(batch.image, mask), mask);
  const auto loss = pretrain_loss(out.segmentation, batch.segmentation, batch.image, out.reconstruction, mask);
  PretrainLosses result;
  result.dice = require_finite(loss.dice, "dice");
  result.mim = require_finite(loss.mim, "mim");
  result.total = loss.total.item<double>();
  gen_opt_->zero_grad();
  loss.total.backward();
  gen_opt_->step();
  return result;
}

PretrainLosses Trainer::finetune_step(const PretrainSample& batch) {
  if (mode_ != TrainMode::kFinetuneEncoder) throw Error("finetune_step requires the finetune-encoder mode");
  model_->train();
  const auto seg = model_->segment(batch.image);
  const auto loss = dice_loss(seg, batch.segmentation);
  PretrainLosses result;
  result.dice = require_finite(loss, "dice");
  result.total = result.dice;
  gen_opt_->zero_grad();
  loss.backward();
  gen_opt_->step();
  return result;
}

std::size_t Trainer::steps_per_epoch(std::size_t samples) const {
  const auto bs = static_cast<std::size_t>(train_config_.batch_size);
  return (samples + bs - 1) / bs;
}

TrainSample Trainer::load_train_batch(const TrainSource& data, const std::vector<std::size_t>& idx) const {
  std::vector<TrainSample> samples;
  for (const auto i : idx) {
    auto s = data.get(i);
    samples.push_back(train_config_.augment
                          ? augment(s, derive_seed(train_config_.seed, {kAugmentStream, static_cast<std::uint64_t>(progress_.epoch), i}),
                                    model_config_.input_size)
                          : resize_to(s, model_config_.input_size));
  }
  return collate(samples);
}

PretrainSample Trainer::load_pretrain_batch(const PretrainSource& data, const std::vector<std::size_t>& idx,
                                            std::vector<std::uint64_t>& mask_seeds) const {
  std::vector<PretrainSample> samples;
  mask_seeds.clear();
  const auto epoch = static_cast<std::uint64_t>(progress_.epoch);
  for (const auto i : idx) {
    auto s = data.get(i);
    samples.push_back(train_config_.augment
                          ? augment(s, derive_seed(train_config_.seed, {kAugmentStream, epoch, i}),
                                    model_config_.input_size)
                          : resize_to(s, model_config_.input_size));
    mask_seeds.push_back(derive_seed(train_config_.seed, {kMaskStream, epoch, i}));
  }
  return collate(samples);
}

bool Trainer::run_epoch(const TrainSource* str_data, const PretrainSource* pre_data, std::ostream* log,
                        std::int64_t max_steps) {
  if (progress_.epoch >= train_config_.epochs) return false;
  const bool str = mode_ == TrainMode::kStr;
  if (str ? str_data == nullptr : pre_data == nullptr) throw Error("run_epoch: no data source for this mode");
  const auto n = str ? str_data->size() : pre_data->size();
  if (n == 0) throw DataError("training set is empty");

  apply_lr();
  const double lr = current_lr();
  const auto order = epoch_order(n, train_config_.seed, static_cast<std::uint64_t>(progress_.epoch));
  const auto batches = make_batches(order, static_cast<std::size_t>(train_config_.batch_size));
  std::int64_t done = 0;
  while (progress_.step_in_epoch < static_cast<std::int64_t>(batches.size())) {
    if (max_steps >= 0 && done >= max_steps) return true;
    const auto& idx = batches[static_cast<std::size_t>(progress_.step_in_epoch)];
    nlohmann::json line;
    line["mode"] = std::string(to_string(mode_));
    line["epoch"] = progress_.epoch;
    line["step"] = progress_.step_in_epoch;
    line["global_step"] = progress_.global_step;
    line["lr"] = lr;
    if (str) {
      const auto l = train_step(load_train_batch(*str_data, idx));
      line["msr"] = l.msr;
      line["per"] = l.per;
      line["sty"] = l.sty;
      line["seg"] = l.seg;
      line["adv"] = l.adv;
      line["disc"] = l.discriminator;
      line["total"] = l.total;
    } else {
      std::vector<std::uint64_t> seeds;
      const auto batch = load_pretrain_batch(*pre_data, idx, seeds);
      const auto l = mode_ == TrainMode::kPretrain ? pretrain_step(batch, seeds) : finetune_step(batch);
      line["dice"] = l.dice;
      if (mode_ == TrainMode::kPretrain) line["mim"] = l.mim;
      line["total"] = l.total;
    }
    if (log) *log << line.dump() << '\n' << std::flush;
    ++progress_.step_in_epoch;
    ++progress_.global_step;
    ++done;
  }
  ++progress_.epoch;
  progress_.step_in_epoch = 0;
  if (progress_.epoch < train_config_.epochs) apply_lr();
  return progress_.epoch < train_config_.epochs;
}

void Trainer::fit(const TrainSource* str_data, const PretrainSource* pre_data, std::ostream* log,
                  const std::string& checkpoint_path, const std::function<void(const TrainProgress&)>& on_epoch) {
  while (progress_.epoch < train_config_.epochs) {
    run_epoch(str_data, pre_data, log);
    if (!checkpoint_path.empty()) save(checkpoint_path);
    if (on_epoch) on_epoch(progress_);
  }
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.metadata["format"] = "viteraser-train";
  ckpt.metadata["mode"] = std::string(to_string(mode_));
  ckpt.metadata["epoch"] = std::to_string(progress_.epoch);
  ckpt.metadata["step_in_epoch"] = std::to_string(progress_.step_in_epoch);
  ckpt.metadata["global_step"] = std::to_string(progress_.global_step);
  ckpt.metadata["model_config"] = serialize(model_config_);
  ckpt.metadata["train_config"] = to_kv(train_config_).str();
  ckpt.metadata["extractor_seed"] = std::to_string(derive_seed(train_config_.seed, {kExtractorStream}));
  store_module(*model_, "gen/", ckpt);
  store_optimizer(*gen_opt_, gen_params_, "opt_gen/", ckpt);
  if (mode_ == TrainMode::kStr) {
    store_module(*disc_, "disc/", ckpt);
    store_module(*extractor_, "ext/", ckpt);
    store_optimizer(*disc_opt_, disc_->parameters(), "opt_disc/", ckpt);
  }
  {
    auto gen = at::detail::getDefaultCPUGenerator();
    std::lock_guard<std::mutex> lock(gen.mutex());
    ckpt.tensors["rng/torch_cpu"] = gen.get_state();
  }
  return ckpt;
}

void Trainer::save(const std::string& path) const { save_checkpoint(snapshot(), path); }

std::vector<std::string> Trainer::restore(const Checkpoint& ckpt) {
  if (meta_get(ckpt, "format") != "viteraser-train") throw CheckpointError("not a training checkpoint");
  const auto mode = meta_get(ckpt, "mode");
  if (mode != to_string(mode_)) {
    throw CheckpointError("checkpoint was written in mode '" + mode + "', not '" + std::string(to_string(mode_)) + "'");
  }
  std::vector<std::string> warnings;
  if (meta_get(ckpt, "model_config") != serialize(model_config_)) {
    warnings.push_back("checkpoint model config differs from the requested config");
  }
  if (meta_get(ckpt, "train_config") != to_kv(train_config_).str()) {
    warnings.push_back("checkpoint training config differs from the requested config; using the requested one");
  }
  restore_module(*model_, "gen/", ckpt, true);
  restore_optimizer(*gen_opt_, gen_params_, "opt_gen/", ckpt);
  if (mode_ == TrainMode::kStr) {
    restore_module(*disc_, "disc/", ckpt, true);
    restore_module(*extractor_, "ext/", ckpt, true);
    restore_optimizer(*disc_opt_, disc_->parameters(), "opt_disc/", ckpt);
  }
  const auto rng = ckpt.tensors.find("rng/torch_cpu");
  if (rng != ckpt.tensors.end()) {
    auto gen = at::detail::getDefaultCPUGenerator();
    std::lock_guard<std::mutex> lock(gen.mutex());
    gen.set_state(rng->second);
  }
  progress_.epoch = meta_int(ckpt, "epoch");
  progress_.step_in_epoch = meta_int(ckpt, "step_in_epoch");
  progress_.global_step = meta_int(ckpt, "global_step");
  apply_lr();
  return warnings;
}

std::vector<std::string> Trainer::load(const std::string& path) { return restore(load_checkpoint(path)); }

void Trainer::load_generator_weights(const Checkpoint& ckpt) {
  restore_module(*model_, "gen/", ckpt, false);
}

ViTEraser load_generator(const std::string& path) {
  const auto ckpt = load_checkpoint(path);
  const auto config = parse_model_config(meta_get(ckpt, "model_config"));
  ViTEraser model(config);
  restore_module(*model, "gen/", ckpt, true);
  model->eval();
  return model;
}

}  // namespace viteraser
