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
#include "ldfuse/data_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "ldfuse/common.hpp"
#include "ldfuse/value_range.hpp"

namespace ldfuse {

namespace {

const std::vector<std::string> kRasterExts = {".png", ".jpg", ".jpeg", ".bmp",
                                              ".pgm", ".ppm", ".tif", ".tiff"};
const std::vector<std::string> kLosslessExts = {".png", ".bmp", ".pgm", ".tif", ".tiff"};

bool has_ext(const std::filesystem::path& p, const std::vector<std::string>& exts) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), ::tolower);
  return std::find(exts.begin(), exts.end(), e) != exts.end();
}

torch::Tensor mat_to_unit(const cv::Mat& gray) {
  torch::Tensor out = torch::empty({gray.rows, gray.cols}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  if (gray.depth() == CV_8U) {
    for (int r = 0; r < gray.rows; ++r)
      for (int c = 0; c < gray.cols; ++c) *dst++ = gray.at<std::uint8_t>(r, c) / 255.0f;
  } else if (gray.depth() == CV_16U) {
    for (int r = 0; r < gray.rows; ++r)
      for (int c = 0; c < gray.cols; ++c) *dst++ = gray.at<std::uint16_t>(r, c) / 65535.0f;
  } else if (gray.depth() == CV_32F) {
    for (int r = 0; r < gray.rows; ++r)
      for (int c = 0; c < gray.cols; ++c) *dst++ = gray.at<float>(r, c);
  } else {
    throw IoError(concat("unsupported pixel depth ", gray.depth()));
  }
  return out;
}

}  // namespace

void ImagePair::validate() const {
  check(ir.dim() == 2 && vs.dim() == 2, "image pair '", id, "': images must be [H, W]");
  check(ir.sizes() == vs.sizes(), "image pair '", id, "': dimension mismatch ", ir.sizes(), " vs ",
        vs.sizes());
  check(ir.scalar_type() == torch::kFloat32 && vs.scalar_type() == torch::kFloat32,
        "image pair '", id, "': expected float32 tensors");
  const double lo = range == RangeTag::kUnit ? 0.0 : -1.0;
  const double hi = 1.0;
  for (const auto* t : {&ir, &vs}) {
    check(torch::isfinite(*t).all().item<bool>(), "image pair '", id, "': non-finite pixels");
    const double mn = t->min().item<double>();
    const double mx = t->max().item<double>();
    check(mn >= lo - 1e-6 && mx <= hi + 1e-6, "image pair '", id, "': values [", mn, ", ", mx,
          "] outside declared range");
  }
}

torch::Tensor load_image_unit(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  if (raw.empty()) throw IoError(concat("cannot read image: ", path.string()));
  cv::Mat gray;
  if (raw.channels() == 1) {
    gray = raw;
  } else if (raw.channels() == 3 || raw.channels() == 4) {
    cv::cvtColor(raw, gray, raw.channels() == 3 ? cv::COLOR_BGR2GRAY : cv::COLOR_BGRA2GRAY);
  } else {
    throw IoError(concat(path.string(), ": unsupported channel count ", raw.channels()));
  }
  return mat_to_unit(gray);
}

void save_fused(const torch::Tensor& signed_img, const std::filesystem::path& path) {
  check(signed_img.dim() == 2, "save_fused expects a single [H, W] image");
  check(torch::isfinite(signed_img).all().item<bool>(), "save_fused: non-finite values");
  if (!has_ext(path, kLosslessExts))
    throw IoError(concat("refusing to write fused output to a lossy/unknown format: ",
                         path.string(), " (use .png)"));

  torch::Tensor u8 = signed_to_uint8(signed_img).contiguous();
  cv::Mat mat(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1,
              u8.data_ptr<std::uint8_t>());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw IoError(concat("cannot write: ", path.string()));
}

torch::Tensor resize_short_side(const torch::Tensor& img, std::int64_t target) {
  check(img.dim() == 2 && img.numel() > 0, "resize_short_side expects a non-empty [H, W] image");
  check(target > 0, "resize target must be positive");
  const auto h = img.size(0);
  const auto w = img.size(1);
  const double scale = static_cast<double>(target) / static_cast<double>(std::min(h, w));
  std::int64_t nh, nw;
  if (h <= w) {
    nh = target;
    nw = static_cast<std::int64_t>(std::llround(static_cast<double>(w) * scale));
  } else {
    nw = target;
    nh = static_cast<std::int64_t>(std::llround(static_cast<double>(h) * scale));
  }
  if (nh == h && nw == w) return img;
  namespace F = torch::nn::functional;
  auto opts = F::InterpolateFuncOptions()
                  .size(std::vector<std::int64_t>{nh, nw})
                  .mode(torch::kBilinear)
                  .align_corners(false)
                  .antialias(scale < 1.0);
  return F::interpolate(img.unsqueeze(0).unsqueeze(0), opts).squeeze(0).squeeze(0);
}

namespace {

CorpusLoadReport pair_listings(
    const std::vector<std::pair<std::string, std::filesystem::path>>& ir_files,
    const std::vector<std::pair<std::string, std::filesystem::path>>& vs_files) {
  CorpusLoadReport report;
  std::map<std::string, std::filesystem::path> vs_by_stem(vs_files.begin(), vs_files.end());
  std::map<std::string, std::filesystem::path> ir_by_stem(ir_files.begin(), ir_files.end());

  for (const auto& [stem, ir_path] : ir_files) {
    auto it = vs_by_stem.find(stem);
    if (it == vs_by_stem.end()) {
      report.warnings.push_back(concat("no visible image for stem '", stem, "'"));
      continue;
    }
    ImagePair pair;
    pair.id = stem;
    pair.source_path_ir = ir_path;
    pair.source_path_vs = it->second;
    pair.ir = load_image_unit(ir_path);
    pair.vs = load_image_unit(it->second);
    if (pair.ir.sizes() != pair.vs.sizes()) {
      report.warnings.push_back(concat("pair '", stem, "' rejected: dimension mismatch ",
                                       pair.ir.sizes(), " vs ", pair.vs.sizes()));
      continue;
    }
    pair.validate();
    report.pairs.push_back(std::move(pair));
  }
  for (const auto& [stem, path] : vs_files) {
    if (!ir_by_stem.count(stem))
      report.warnings.push_back(concat("no infrared image for stem '", stem, "'"));
  }
  for (const auto& w : report.warnings) log_warn("load_corpus: ", w);
  return report;
}

}  // namespace

std::vector<std::pair<std::string, std::filesystem::path>> list_images(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError(concat("not a directory: ", dir.string()));
  std::vector<std::pair<std::string, std::filesystem::path>> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_ext(entry.path(), kRasterExts))
      files.emplace_back(entry.path().stem().string(), entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

CorpusLoadReport load_corpus(const std::filesystem::path& root) {
  return load_corpus_dirs(root / "ir", root / "vi");
}

CorpusLoadReport load_corpus_dirs(const std::filesystem::path& ir_dir,
                                  const std::filesystem::path& vi_dir) {
  return pair_listings(list_images(ir_dir), list_images(vi_dir));
}

CorpusLoadReport load_manifest(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw IoError(concat("cannot open manifest: ", manifest.string()));
  const auto base = manifest.parent_path();

  CorpusLoadReport report;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id, ir_rel, vs_rel;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, ir_rel, '\t') ||
        !std::getline(ls, vs_rel))
      throw ValidationError(
          concat(manifest.string(), ":", lineno, ": expected 'id<TAB>ir_path<TAB>vs_path'"));
    ImagePair pair;
    pair.id = id;
    const std::filesystem::path ir_path(ir_rel);
    const std::filesystem::path vs_path(vs_rel);
    pair.source_path_ir = ir_path.is_absolute() ? ir_path : base / ir_path;
    pair.source_path_vs = vs_path.is_absolute() ? vs_path : base / vs_path;
    pair.ir = load_image_unit(pair.source_path_ir);
    pair.vs = load_image_unit(pair.source_path_vs);
    if (pair.ir.sizes() != pair.vs.sizes()) {
      report.warnings.push_back(concat("pair '", id, "' rejected: dimension mismatch"));
      log_warn("load_manifest: ", report.warnings.back());
      continue;
    }
    pair.validate();
    report.pairs.push_back(std::move(pair));
  }
  return report;
}

}  // namespace ldfuse
