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
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ldfuse/config.hpp"
#include "ldfuse/data_io.hpp"
#include "ldfuse/losses.hpp"
#include "ldfuse/net.hpp"
#include "ldfuse/patches.hpp"

namespace ldfuse {

enum class PromptMode { kDefault, kSwapped, kContent };

struct TrainConfig {
  double lr = 1e-3;
  std::int64_t epochs = 70;
  std::int64_t warmup_epochs = 1;       // linear per-step ramp
  std::int64_t decay_start_epoch = 50;  // halving starts the epoch after this
  std::int64_t decay_interval = 10;
  double decay_factor = 0.5;
  std::int64_t batch_size = 16;
  std::int64_t crop_size = 224;
  std::int64_t max_steps = -1;  // optimizer-step cap for toy runs; -1 = epochs decide
  std::int64_t checkpoint_every = 1;  // epochs
  std::uint64_t seed = 0;

  LossWeights weights;  // lambda 0.5 on regularization, alpha 1.0 on fidelity
  FidelityNorm fidelity_norm = FidelityNorm::kL1;
  bool disable_ldl = false;  // fidelity-only training, direction terms report 0
  bool disable_phi = false;  // regularization weight forced to 0

  std::int64_t patches_per_image = 8;
  PatchSamplerOptions patch_sizes;
  double sigma = 6.0;
  EntropyKeepRule keep_rule = EntropyKeepRule::kMax;
  double augment_distortion = 0.5;

  PromptMode prompt_mode = PromptMode::kDefault;
  std::string objective_text_override;       // empty = built-in objective
  std::string infrared_text_override;
  std::string visible_text_override;
  std::string content_prompt_manifest;       // content mode: id<TAB>ir text<TAB>vs text

  std::string weights_dir;  // encoder + extractor archives ("" = default cache)
  std::int64_t base_channels = 32;
  bool strict_size = false;

  void validate() const;
  static TrainConfig from_store(const KeyValueStore& store);
  static const std::set<std::string>& known_keys();
  KeyValueStore to_store() const;
};

/// Epoch-level learning rate: base rate through `decay_start_epoch`, then
/// halved for each started `decay_interval`. The warmup epoch reports the
/// base rate; the intra-epoch ramp lives in `lr_at_step`.
double lr_at(std::int64_t epoch, const TrainConfig& config);

/// Per-step rate: linear 0 -> lr ramp across the warmup epochs, then
/// `lr_at(epoch)`.
double lr_at_step(std::int64_t epoch, std::int64_t step_in_epoch, std::int64_t steps_per_epoch,
                  const TrainConfig& config);

struct StepRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double lr = 0.0;
  LossTerms terms;
};

struct TrainResult {
  std::filesystem::path checkpoint;  // latest checkpoint path
  std::vector<StepRecord> history;
};

/// Language-driven training driver. Owns the frozen encoders and the
/// trainable generator for one run.
class Trainer {
 public:
  Trainer(TrainConfig config, TextImageEncoder encoder, FidelityFeatureExtractor extractor);

  /// Loads both frozen encoders from config.weights_dir (or the default).
  static Trainer from_weights(TrainConfig config);

  /// Runs the configured schedule over the pair corpus. Checkpoints land in
  /// `out_dir`; a line-delimited loss log is written to `log` when given.
  TrainResult run(const std::vector<ImagePair>& pairs, const std::filesystem::path& out_dir,
                  std::ostream* log = nullptr);

  const TextImageEncoder& encoder() const { return encoder_; }
  FusionNet& net() { return net_; }

 private:
  struct TextModel;
  TextModel resolve_text_model(const std::vector<ImagePair>& pairs) const;

  TrainConfig config_;
  TextImageEncoder encoder_;
  FidelityFeatureExtractor extractor_;
  FusionNet net_{nullptr};
};

struct FuseReport {
  std::vector<std::string> fused_ids;
  std::vector<std::string> warnings;
  std::filesystem::path out_dir;
};

/// Inference over a directory pair: one 8-bit fused PNG per matched stem.
/// This path never touches the vision-language encoder; only the generator
/// checkpoint is loaded.
FuseReport fuse_directory(const std::filesystem::path& checkpoint_path,
                          const std::filesystem::path& ir_dir,
                          const std::filesystem::path& vi_dir,
                          const std::filesystem::path& out_dir);

/// Single-pair inference helper used by `fuse_directory` and the bindings.
torch::Tensor fuse_pair(FusionNet& net, const ImagePair& pair);

}  // namespace ldfuse
