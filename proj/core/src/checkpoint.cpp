/*
 * Copyright 2026 The aspectfsl Authors
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

#include "aspectfsl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "aspectfsl/error.hpp"

namespace aspectfsl {

namespace {

constexpr char kMagic[8] = {'A', 'F', 'S', 'L', 'C', 'K', 'P', 'T'};

template <typename V>
void put(std::ostream& out, V value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename V>
V get(std::istream& in, const std::filesystem::path& path) {
  V value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) throw IoError(path.string() + ": truncated checkpoint");
  return value;
}

std::string get_string(std::istream& in, std::size_t len, const std::filesystem::path& path) {
  if (len > (std::size_t{1} << 30)) throw IoError(path.string() + ": corrupt checkpoint");
  std::string s(len, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(len))) throw IoError(path.string() + ": truncated checkpoint");
  return s;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string meta = checkpoint.meta.dump();
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint64_t>(out, checkpoint.arrays.size());
    for (const auto& a : checkpoint.arrays) {
      if (a.data.size() != a.shape.size()) throw ShapeError("array '" + a.name + "' does not match its shape");
      put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
      out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
      for (int d : {a.shape.n, a.shape.c, a.shape.h, a.shape.w}) put<std::int32_t>(out, d);
      out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw IoError(path.string() + ": not an aspectfsl checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto meta_len = get<std::uint64_t>(in, path);
  try {
    ck.meta = nlohmann::json::parse(get_string(in, meta_len, path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = get_string(in, get<std::uint32_t>(in, path), path);
    a.shape.n = get<std::int32_t>(in, path);
    a.shape.c = get<std::int32_t>(in, path);
    a.shape.h = get<std::int32_t>(in, path);
    a.shape.w = get<std::int32_t>(in, path);
    if (a.shape.n < 0 || a.shape.c < 0 || a.shape.h < 0 || a.shape.w < 0)
      throw IoError(path.string() + ": corrupt checkpoint");
    a.data.resize(a.shape.size());
    if (!in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double))))
      throw IoError(path.string() + ": truncated checkpoint");
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

template <typename T>
std::vector<NamedArray> export_arrays(const std::vector<nn::ParamRef<T>>& refs) {
  std::vector<NamedArray> out;
  for (const auto& r : refs)
    out.push_back({r.name, r.value->shape(), std::vector<double>(r.value->vec().begin(), r.value->vec().end())});
  return out;
}

template <typename T>
void import_arrays(const Checkpoint& checkpoint, const std::vector<nn::ParamRef<T>>& refs) {
  for (const auto& r : refs) {
    const NamedArray* a = checkpoint.find(r.name);
    if (!a) throw ShapeError("checkpoint lacks array '" + r.name + "' (model config mismatch?)");
    if (!(a->shape == r.value->shape()))
      throw ShapeError("checkpoint array '" + r.name + "' is " + a->shape.str() + ", model expects " +
                       r.value->shape().str());
    std::copy(a->data.begin(), a->data.end(), r.value->vec().begin());
  }
}

template std::vector<NamedArray> export_arrays<float>(const std::vector<nn::ParamRef<float>>&);
template std::vector<NamedArray> export_arrays<double>(const std::vector<nn::ParamRef<double>>&);
template void import_arrays<float>(const Checkpoint&, const std::vector<nn::ParamRef<float>>&);
template void import_arrays<double>(const Checkpoint&, const std::vector<nn::ParamRef<double>>&);

}  // namespace aspectfsl
