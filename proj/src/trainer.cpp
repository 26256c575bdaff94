/*
 * Copyright (c) 2026, the ldfuse authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "ldfuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "ldfuse/common.hpp"
#include "ldfuse/tensor_archive.hpp"
#include "ldfuse/value_range.hpp"

namespace ldfuse {

namespace {

FidelityNorm parse_fidelity_norm(const std::string& s) {
  if (s == "l1") return FidelityNorm::kL1;
  if (s == "l2") return FidelityNorm::kL2;
  throw ValidationError(concat("loss.fidelity_norm must be l1 or l2, got '", s, "'"));
}

EntropyKeepRule parse_keep_rule(const std::string& s) {
  if (s == "max") return EntropyKeepRule::kMax;
  if (s == "min") return EntropyKeepRule::kMin;
  if (s == "mean") return EntropyKeepRule::kMean;
  throw ValidationError(concat("patches.keep_rule must be max, min or mean, got '", s, "'"));
}

PromptMode parse_prompt_mode(const std::string& s) {
  if (s == "default") return PromptMode::kDefault;
  if (s == "swapped") return PromptMode::kSwapped;
  if (s == "content") return PromptMode::kContent;
  throw ValidationError(concat("prompts.mode must be default, swapped or content, got '", s, "'"));
}

std::string fidelity_norm_name(FidelityNorm n) { return n == FidelityNorm::kL1 ? "l1" : "l2"; }
std::string keep_rule_name(EntropyKeepRule r) {
  switch (r) {
    case EntropyKeepRule::kMax: return "max";
    case EntropyKeepRule::kMin: return "min";
    case EntropyKeepRule::kMean: return "mean";
  }
  return "max";
}
std::string prompt_mode_name(PromptMode m) {
  switch (m) {
    case PromptMode::kDefault: return "default";
    case PromptMode::kSwapped: return "swapped";
    case PromptMode::kContent: return "content";
  }
  return "default";
}

}  // namespace

void TrainConfig::validate() const {
  check(lr > 0, "train.lr must be positive");
  check(epochs > 0, "train.epochs must be positive");
  check(warmup_epochs >= 0 && warmup_epochs <= epochs, "train.warmup_epochs out of range");
  check(decay_start_epoch > 0 && decay_start_epoch < epochs,
        "train.decay_start_epoch must be positive and below train.epochs");
  check(decay_interval > 0, "train.decay_interval must be positive");
  check(decay_factor > 0 && decay_factor < 1, "train.decay_factor must be in (0, 1)");
  check(batch_size > 0, "train.batch_size must be positive");
  check(crop_size >= NetworkConfig::kTotalStride, "train.crop_size too small");
  check(patches_per_image >= 0, "patches.count must be >= 0");
  check(sigma >= 0 && sigma <= 8, "patches.sigma must be within [0, 8] bits");
  check(patch_sizes.min_size >= 1 && patch_sizes.min_size <= patch_sizes.max_size,
        "patches.min_size/max_size form an empty range");
  check(augment_distortion >= 0 && augment_distortion <= 1,
        "patches.distortion must be in [0, 1]");
  check(weights.lambda_regularization >= 0, "loss.lambda must be >= 0");
  check(weights.alpha_fidelity >= 0, "loss.alpha must be >= 0");
  check(base_channels >= 2, "net.base_channels must be >= 2");
  if (prompt_mode == PromptMode::kContent)
    check(!content_prompt_manifest.empty(),
          "prompts.mode=content requires prompts.content_manifest");
}

const std::set<std::string>& TrainConfig::known_keys() {
  static const std::set<std::string> keys = {
      "train.lr",          "train.epochs",        "train.warmup_epochs",
      "train.decay_start_epoch", "train.decay_interval", "train.decay_factor",
      "train.batch_size",  "train.crop_size",     "train.max_steps",
      "train.checkpoint_every", "train.seed",
      "loss.lambda",       "loss.alpha",          "loss.fidelity_norm",
      "loss.disable_ldl",  "loss.disable_phi",
      "patches.count",     "patches.min_size",    "patches.max_size",
      "patches.sigma",     "patches.keep_rule",   "patches.distortion",
      "prompts.mode",      "prompts.objective",   "prompts.infrared",
      "prompts.visible",   "prompts.content_manifest",
      "net.base_channels", "net.strict_size",
      "embed.weights_dir",
  };
  return keys;
}

TrainConfig TrainConfig::from_store(const KeyValueStore& store) {
  store.require_known_keys(known_keys());
  TrainConfig c;
  c.lr = store.get_double("train.lr", c.lr);
  c.epochs = store.get_int("train.epochs", c.epochs);
  c.warmup_epochs = store.get_int("train.warmup_epochs", c.warmup_epochs);
  c.decay_start_epoch = store.get_int("train.decay_start_epoch", c.decay_start_epoch);
  c.decay_interval = store.get_int("train.decay_interval", c.decay_interval);
  c.decay_factor = store.get_double("train.decay_factor", c.decay_factor);
  c.batch_size = store.get_int("train.batch_size", c.batch_size);
  c.crop_size = store.get_int("train.crop_size", c.crop_size);
  c.max_steps = store.get_int("train.max_steps", c.max_steps);
  c.checkpoint_every = store.get_int("train.checkpoint_every", c.checkpoint_every);
  c.seed = static_cast<std::uint64_t>(store.get_int("train.seed", 0));
  c.weights.lambda_regularization = store.get_double("loss.lambda", 0.5);
  c.weights.alpha_fidelity = store.get_double("loss.alpha", 1.0);
  c.fidelity_norm = parse_fidelity_norm(store.get_string("loss.fidelity_norm", "l1"));
  c.disable_ldl = store.get_bool("loss.disable_ldl", false);
  c.disable_phi = store.get_bool("loss.disable_phi", false);
  c.patches_per_image = store.get_int("patches.count", c.patches_per_image);
  c.patch_sizes.min_size = store.get_int("patches.min_size", c.patch_sizes.min_size);
  c.patch_sizes.max_size = store.get_int("patches.max_size", c.patch_sizes.max_size);
  c.sigma = store.get_double("patches.sigma", c.sigma);
  c.keep_rule = parse_keep_rule(store.get_string("patches.keep_rule", "max"));
  c.augment_distortion = store.get_double("patches.distortion", c.augment_distortion);
  c.prompt_mode = parse_prompt_mode(store.get_string("prompts.mode", "default"));
  c.objective_text_override = store.get_string("prompts.objective", "");
  c.infrared_text_override = store.get_string("prompts.infrared", "");
  c.visible_text_override = store.get_string("prompts.visible", "");
  c.content_prompt_manifest = store.get_string("prompts.content_manifest", "");
  c.base_channels = store.get_int("net.base_channels", c.base_channels);
  c.strict_size = store.get_bool("net.strict_size", false);
  c.weights_dir = store.get_string("embed.weights_dir", "");
  c.validate();
  return c;
}

KeyValueStore TrainConfig::to_store() const {
  KeyValueStore s;
  auto put_num = [&](const std::string& k, double v) { s.set(k, concat(v)); };
  auto put_int = [&](const std::string& k, std::int64_t v) { s.set(k, concat(v)); };
  put_num("train.lr", lr);
  put_int("train.epochs", epochs);
  put_int("train.warmup_epochs", warmup_epochs);
  put_int("train.decay_start_epoch", decay_start_epoch);
  put_int("train.decay_interval", decay_interval);
  put_num("train.decay_factor", decay_factor);
  put_int("train.batch_size", batch_size);
  put_int("train.crop_size", crop_size);
  put_int("train.max_steps", max_steps);
  put_int("train.checkpoint_every", checkpoint_every);
  put_int("train.seed", static_cast<std::int64_t>(seed));
  put_num("loss.lambda", weights.lambda_regularization);
  put_num("loss.alpha", weights.alpha_fidelity);
  s.set("loss.fidelity_norm", fidelity_norm_name(fidelity_norm));
  s.set("loss.disable_ldl", disable_ldl ? "true" : "false");
  s.set("loss.disable_phi", disable_phi ? "true" : "false");
  put_int("patches.count", patches_per_image);
  put_int("patches.min_size", patch_sizes.min_size);
  put_int("patches.max_size", patch_sizes.max_size);
  put_num("patches.sigma", sigma);
  s.set("patches.keep_rule", keep_rule_name(keep_rule));
  put_num("patches.distortion", augment_distortion);
  s.set("prompts.mode", prompt_mode_name(prompt_mode));
  if (!objective_text_override.empty()) s.set("prompts.objective", objective_text_override);
  if (!infrared_text_override.empty()) s.set("prompts.infrared", infrared_text_override);
  if (!visible_text_override.empty()) s.set("prompts.visible", visible_text_override);
  if (!content_prompt_manifest.empty()) s.set("prompts.content_manifest", content_prompt_manifest);
  put_int("net.base_channels", base_channels);
  s.set("net.strict_size", strict_size ? "true" : "false");
  if (!weights_dir.empty()) s.set("embed.weights_dir", weights_dir);
  return s;
}

double lr_at(std::int64_t epoch, const TrainConfig& config) {
  check(epoch >= 1 && epoch <= config.epochs, "lr_at: epoch ", epoch, " outside [1, ",
        config.epochs, "]");
  if (epoch <= config.decay_start_epoch) return config.lr;
  const auto halvings = 1 + (epoch - config.decay_start_epoch - 1) / config.decay_interval;
  return config.lr * std::pow(config.decay_factor, static_cast<double>(halvings));
}

double lr_at_step(std::int64_t epoch, std::int64_t step_in_epoch, std::int64_t steps_per_epoch,
                  const TrainConfig& config) {
  check(step_in_epoch >= 0 && step_in_epoch < steps_per_epoch, "lr_at_step: step out of range");
  if (epoch <= config.warmup_epochs) {
    const double total = static_cast<double>(config.warmup_epochs * steps_per_epoch);
    const double done = static_cast<double>((epoch - 1) * steps_per_epoch + step_in_epoch + 1);
    return config.lr * done / total;
  }
  return lr_at(epoch, config);
}

struct Trainer::TextModel {
  // Shared transition pair, or per-pair ones in content mode.
  TransitionPair shared;
  std::map<std::string, TransitionPair> per_pair;  // id -> pair
  bool content_mode = false;

  const TransitionPair& for_pair(const std::string& id) const {
    if (!content_mode) return shared;
    auto it = per_pair.find(id);
    return it == per_pair.end() ? shared : it->second;
  }
};

Trainer::Trainer(TrainConfig config, TextImageEncoder encoder,
                 FidelityFeatureExtractor extractor)
    : config_(std::move(config)), encoder_(std::move(encoder)), extractor_(std::move(extractor)) {
  config_.validate();
}

Trainer Trainer::from_weights(TrainConfig config) {
  const std::filesystem::path dir = config.weights_dir.empty()
                                        ? TextImageEncoder::default_weights_dir()
                                        : std::filesystem::path(config.weights_dir);
  auto encoder = TextImageEncoder::load(dir);
  auto extractor = FidelityFeatureExtractor::load(dir / "vgg_features.lta");
  return Trainer(std::move(config), std::move(encoder), std::move(extractor));
}

Trainer::TextModel Trainer::resolve_text_model(const std::vector<ImagePair>& pairs) const {
  PromptSet base = PromptSet::defaults();
  if (!config_.objective_text_override.empty())
    base.objective_text = config_.objective_text_override;
  if (!config_.infrared_text_override.empty()) base.infrared_text = config_.infrared_text_override;
  if (!config_.visible_text_override.empty()) base.visible_text = config_.visible_text_override;
  if (config_.prompt_mode == PromptMode::kSwapped) base = base.swapped();

  TextModel model;
  model.shared = encoder_.build_fusion_model(base);
  if (config_.prompt_mode != PromptMode::kContent) return model;

  model.content_mode = true;
  std::ifstream is(config_.content_prompt_manifest);
  if (!is)
    throw IoError(concat("cannot open content prompt manifest: ", config_.content_prompt_manifest));
  std::map<std::string, std::pair<std::string, std::string>> texts;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id, ir_text, vs_text;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, ir_text, '\t') ||
        !std::getline(ls, vs_text))
      throw ValidationError(concat(config_.content_prompt_manifest, ":", lineno,
                                   ": expected 'id<TAB>infrared text<TAB>visible text'"));
    texts[id] = {ir_text, vs_text};
  }
  for (const auto& pair : pairs) {
    auto it = texts.find(pair.id);
    if (it == texts.end()) {
      log_warn("content prompts: no entry for pair '", pair.id, "', using the base prompts");
      continue;
    }
    PromptSet ps = base;
    ps.infrared_text = it->second.first;
    ps.visible_text = it->second.second;
    model.per_pair[pair.id] = encoder_.build_fusion_model(ps);
  }
  return model;
}

TrainResult Trainer::run(const std::vector<ImagePair>& pairs,
                         const std::filesystem::path& out_dir, std::ostream* log) {
  check(!pairs.empty(), "train: need at least one registered image pair");
  for (const auto& pair : pairs) pair.validate();
  std::filesystem::create_directories(out_dir);

  // One shared crop size for the whole run, clamped to the corpus and the
  // network stride.
  std::int64_t crop = config_.crop_size;
  for (const auto& pair : pairs)
    crop = std::min({crop, pair.ir.size(0), pair.ir.size(1)});
  crop -= crop % NetworkConfig::kTotalStride;
  check(crop >= NetworkConfig::kTotalStride, "train: images too small to crop");
  if (crop != config_.crop_size)
    log_warn("train: crop size clamped to ", crop, " (corpus smaller than ",
             config_.crop_size, ")");

  const auto text_model = resolve_text_model(pairs);

  torch::manual_seed(config_.seed);
  net_ = FusionNet(NetworkConfig{config_.base_channels, config_.strict_size});
  net_->train();
  torch::optim::Adam optimizer(net_->parameters(), torch::optim::AdamOptions(config_.lr));

  SeedSequence seeds(config_.seed);
  const std::uint64_t shuffle_seed = seeds.next();
  const std::uint64_t crop_seed = seeds.next();
  const std::uint64_t patch_seed = seeds.next();
  const std::uint64_t augment_seed = seeds.next();
  std::mt19937_64 crop_rng(crop_seed);

  const auto n = static_cast<std::int64_t>(pairs.size());
  const auto steps_per_epoch = (n + config_.batch_size - 1) / config_.batch_size;

  if (log) (*log) << LossTerms::log_header() << "\n";

  TrainResult result;
  std::vector<double> history_total;
  std::int64_t step = 0;
  const auto out_size = encoder_.native_image_size();
  bool done = false;

  for (std::int64_t epoch = 1; epoch <= config_.epochs && !done; ++epoch) {
    std::vector<std::int64_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 epoch_rng(shuffle_seed + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), epoch_rng);

    for (std::int64_t s = 0; s < steps_per_epoch && !done; ++s) {
      const double lr = lr_at_step(epoch, s, steps_per_epoch, config_);
      for (auto& group : optimizer.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

      // Assemble the batch: one shared random crop window per pair.
      std::vector<torch::Tensor> ir_crops, vs_crops;
      std::vector<std::string> batch_ids;
      for (std::int64_t b = 0; b < config_.batch_size; ++b) {
        const auto& pair = pairs[static_cast<std::size_t>(
            order[static_cast<std::size_t>((s * config_.batch_size + b) % n)])];
        const auto h = pair.ir.size(0);
        const auto w = pair.ir.size(1);
        std::uniform_int_distribution<std::int64_t> ry(0, h - crop);
        std::uniform_int_distribution<std::int64_t> rx(0, w - crop);
        const auto y0 = ry(crop_rng);
        const auto x0 = rx(crop_rng);
        ir_crops.push_back(pair.ir.slice(0, y0, y0 + crop).slice(1, x0, x0 + crop));
        vs_crops.push_back(pair.vs.slice(0, y0, y0 + crop).slice(1, x0, x0 + crop));
        batch_ids.push_back(pair.id);
      }
      auto ir_unit = torch::stack(ir_crops, 0).unsqueeze(1);  // [B, 1, c, c]
      auto vs_unit = torch::stack(vs_crops, 0).unsqueeze(1);

      auto fused_signed = net_->fuse(unit_to_signed(ir_unit), unit_to_signed(vs_unit));

      TotalLossResult loss;
      if (config_.disable_ldl) {
        auto fidelity = feature_fidelity_loss(extractor_, signed_to_unit(fused_signed), ir_unit,
                                              vs_unit, config_.fidelity_norm);
        loss.total = config_.weights.alpha_fidelity * fidelity;
        loss.terms = LossTerms::combine(0.0, 0.0, fidelity.item<double>(), config_.weights);
      } else {
        std::vector<PatchBatch> patch_batches;
        SeedSequence step_patch_seeds(patch_seed + static_cast<std::uint64_t>(step) * 1000003ULL);
        SeedSequence step_aug_seeds(augment_seed + static_cast<std::uint64_t>(step) * 1000033ULL);
        for (std::int64_t b = 0; b < config_.batch_size; ++b) {
          if (config_.patches_per_image == 0) break;
          auto batch = sample_patches(ir_unit[b][0], vs_unit[b][0],
                                      fused_signed[b][0], config_.patches_per_image,
                                      step_patch_seeds.next(), config_.patch_sizes, b);
          filter_patches(batch, config_.sigma, config_.keep_rule);
          augment_kept(batch, step_aug_seeds.next(), out_size, config_.augment_distortion);
          patch_batches.push_back(std::move(batch));
        }

        LossWeights weights = config_.weights;
        if (config_.disable_phi) weights.lambda_regularization = 0.0;

        TransitionPair deltas = text_model.shared;
        if (text_model.content_mode) {
          // Expand per-pair text deltas to the item order used by total_loss:
          // whole images first, then surviving patches in batch order.
          std::vector<torch::Tensor> vs_rows, ir_rows;
          for (const auto& id : batch_ids) {
            const auto& p = text_model.for_pair(id);
            vs_rows.push_back(p.from_visible);
            ir_rows.push_back(p.from_infrared);
          }
          for (std::size_t b = 0; b < patch_batches.size(); ++b) {
            const auto& p = text_model.for_pair(batch_ids[b]);
            for (std::size_t k = 0; k < patch_batches[b].augmented_views.size(); ++k) {
              vs_rows.push_back(p.from_visible);
              ir_rows.push_back(p.from_infrared);
            }
          }
          deltas.from_visible = torch::stack(vs_rows, 0);
          deltas.from_infrared = torch::stack(ir_rows, 0);
        }

        loss = total_loss(encoder_, extractor_, ir_unit, vs_unit, fused_signed, patch_batches,
                          deltas, weights, config_.fidelity_norm);
      }

      if (!std::isfinite(loss.terms.total)) {
        TensorArchive dump;
        dump.meta["kind"] = "diagnostic";
        dump.meta["step"] = step;
        dump.meta["epoch"] = epoch;
        dump.meta["l_d"] = loss.terms.direction;
        dump.meta["phi"] = loss.terms.regularization;
        dump.meta["l_v"] = loss.terms.fidelity;
        dump.put("ir", ir_unit);
        dump.put("vs", vs_unit);
        dump.put("fused", fused_signed);
        const auto dump_path = out_dir / concat("diagnostic_step_", step, ".lta");
        dump.save(dump_path);
        throw std::runtime_error(concat("non-finite loss at step ", step,
                                        "; offending batch dumped to ", dump_path.string()));
      }

      optimizer.zero_grad();
      loss.total.backward();
      optimizer.step();

      StepRecord rec{step, epoch, lr, loss.terms};
      if (log) (*log) << loss.terms.log_row(step, epoch, lr) << "\n";
      result.history.push_back(rec);
      history_total.push_back(loss.terms.total);

      ++step;
      if (config_.max_steps > 0 && step >= config_.max_steps) done = true;
    }

    if (epoch % config_.checkpoint_every == 0 || epoch == config_.epochs || done) {
      Checkpoint info;
      info.config = net_->config();
      info.encoder_variant = encoder_.variant();
      info.epoch = epoch;
      info.history_total = history_total;
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.lta", static_cast<int>(epoch));
      Checkpoint::save(out_dir / name, net_, info);
      Checkpoint::save(out_dir / "checkpoint_latest.lta", net_, info);
      result.checkpoint = out_dir / "checkpoint_latest.lta";
    }
  }
  return result;
}

}  // namespace ldfuse
