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

// Inference path. Deliberately self-contained: fusing a directory loads the
// generator checkpoint and nothing else, so it works with the
// vision-language encoder weights entirely absent.

#include "ldfuse/common.hpp"
#include "ldfuse/data_io.hpp"
#include "ldfuse/net.hpp"
#include "ldfuse/trainer.hpp"
#include "ldfuse/value_range.hpp"

namespace ldfuse {

torch::Tensor fuse_pair(FusionNet& net, const ImagePair& pair) {
  pair.validate();
  torch::NoGradGuard no_grad;
  auto to_net = [&](const torch::Tensor& img) {
    auto x = pair.range == RangeTag::kUnit ? unit_to_signed(img) : img;
    return x.unsqueeze(0).unsqueeze(0);
  };
  return net->fuse(to_net(pair.ir), to_net(pair.vs)).squeeze(0).squeeze(0);
}

FuseReport fuse_directory(const std::filesystem::path& checkpoint_path,
                          const std::filesystem::path& ir_dir,
                          const std::filesystem::path& vi_dir,
                          const std::filesystem::path& out_dir) {
  auto [net, info] = Checkpoint::load(checkpoint_path);
  net->eval();
  log_info("loaded checkpoint (epoch ", info.epoch, ", encoder variant '", info.encoder_variant,
           "')");

  auto corpus = load_corpus_dirs(ir_dir, vi_dir);
  check(!corpus.pairs.empty(), "fuse: no matched image pairs under ", ir_dir.string(), " and ",
        vi_dir.string());

  FuseReport report;
  report.warnings = corpus.warnings;
  report.out_dir = out_dir;
  std::filesystem::create_directories(out_dir);
  for (const auto& pair : corpus.pairs) {
    auto fused = fuse_pair(net, pair);
    save_fused(fused, out_dir / (pair.id + ".png"));
    report.fused_ids.push_back(pair.id);
  }
  return report;
}

}  // namespace ldfuse
