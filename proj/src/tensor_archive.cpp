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
#include "ldfuse/tensor_archive.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "ldfuse/common.hpp"

namespace ldfuse {

namespace {

constexpr char kMagic[8] = {'L', 'D', 'T', 'E', 'N', 'S', 'A', '1'};

std::uint8_t dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64:   return 2;
    case torch::kUInt8:   return 3;
    default:
      throw IoError(concat("tensor archive: unsupported dtype ", torch::toString(t)));
  }
}

torch::ScalarType tag_dtype(std::uint8_t tag) {
  switch (tag) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    default: throw IoError(concat("tensor archive: unknown dtype tag ", int(tag)));
  }
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("tensor archive: truncated file");
  return v;
}

}  // namespace

const torch::Tensor& TensorArchive::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw IoError(concat("tensor archive: missing entry '", name, "'"));
  return it->second;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(concat("cannot open for writing: ", path.string()));

  os.write(kMagic, sizeof(kMagic));
  const std::string meta_str = meta.dump();
  write_pod<std::uint64_t>(os, meta_str.size());
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  write_pod<std::uint64_t>(os, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    torch::Tensor t = tensor.detach().cpu().contiguous();
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint8_t>(os, dtype_tag(t.scalar_type()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) write_pod<std::int64_t>(os, d);
    const auto bytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
    write_pod<std::uint64_t>(os, bytes);
    os.write(reinterpret_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
  }
  if (!os) throw IoError(concat("write failed: ", path.string()));
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError(concat("cannot open archive: ", path.string(),
                         " (run `ldfuse dev-weights` for development weights, or "
                         "scripts/export_pretrained.py to convert pretrained encoders)"));

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(concat("not a tensor archive: ", path.string()));

  TensorArchive ar;
  const auto meta_len = read_pod<std::uint64_t>(is);
  std::string meta_str(meta_len, '\0');
  is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw IoError("tensor archive: truncated metadata");
  ar.meta = nlohmann::json::parse(meta_str);

  const auto count = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto dtype = tag_dtype(read_pod<std::uint8_t>(is));
    const auto ndim = read_pod<std::uint32_t>(is);
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = read_pod<std::int64_t>(is);
    const auto bytes = read_pod<std::uint64_t>(is);
    torch::Tensor t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != bytes)
      throw IoError(concat("tensor archive: size mismatch for '", name, "'"));
    is.read(reinterpret_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    if (!is) throw IoError(concat("tensor archive: truncated payload for '", name, "'"));
    ar.tensors[name] = t;
  }
  return ar;
}

}  // namespace ldfuse
