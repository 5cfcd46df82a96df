/*
 * Copyright 2026 The tsbackdoor Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "tsb/errors.hpp"
#include "tsb/models.hpp"

namespace tsb {

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'S', 'B', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CheckpointError("truncated checkpoint: " + path.string());
  }
  return v;
}

struct Entry {
  std::string name;
  const nn::Tensor* tensor;
  nn::Var node;
};

std::vector<Entry> entries(const nn::ParamStore& store) {
  std::vector<Entry> out;
  for (const auto& p : store.params()) out.push_back({p.name, &p.node->value, p.node});
  for (const auto& b : store.buffers()) out.push_back({b.name, &b.node->value, b.node});
  return out;
}

}  // namespace

void save_checkpoint(const ModelHandle& model, const std::filesystem::path& path) {
  nlohmann::json table = nlohmann::json::array();
  const auto list = entries(model.store());
  for (const auto& e : list) {
    const auto s = e.tensor->shape();
    table.push_back({{"name", e.name}, {"shape", {s.n, s.c, s.t}}});
  }
  const nlohmann::json header{{"options", model.options().to_json()},
                              {"bn_frozen", model.bn_frozen()},
                              {"tensors", table}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open for writing: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : list) {
    out.write(reinterpret_cast<const char*>(e.tensor->data()),
              static_cast<std::streamsize>(e.tensor->size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("write failed: " + path.string());
}

ModelHandle load_checkpoint(const std::filesystem::path& path,
                            const CheckpointExpectation& expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(in, path);
  if (header_len > (std::uint64_t{1} << 30)) throw CheckpointError("corrupt header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw CheckpointError("truncated checkpoint header: " + path.string());
  }

  nlohmann::json header;
  ModelOptions options;
  try {
    header = nlohmann::json::parse(text);
    const auto& o = header.at("options");
    options = ModelOptions::from_json(o, o.at("num_classes").get<int>(),
                                      o.at("input_length").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("malformed checkpoint options: ") + e.what());
  }

  if (expect.architecture && *expect.architecture != options.architecture) {
    throw CheckpointError("checkpoint architecture " + std::string(to_string(options.architecture)) +
                          " does not match expected " +
                          std::string(to_string(*expect.architecture)));
  }
  if (expect.num_classes && *expect.num_classes != options.num_classes) {
    throw CheckpointError("checkpoint has " + std::to_string(options.num_classes) +
                          " classes, expected " + std::to_string(*expect.num_classes));
  }
  if (expect.input_length && *expect.input_length != options.input_length) {
    throw CheckpointError("checkpoint input length " + std::to_string(options.input_length) +
                          " does not match expected " + std::to_string(*expect.input_length));
  }

  ModelHandle model(options);
  const auto list = entries(model.store());
  const auto& table = header.at("tensors");
  if (!table.is_array() || table.size() != list.size()) {
    throw CheckpointError("checkpoint tensor table does not match the architecture");
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& row = table[i];
    const auto s = list[i].tensor->shape();
    const std::array<int, 3> dims = {s.n, s.c, s.t};
    if (row.value("name", "") != list[i].name ||
        row.value("shape", std::array<int, 3>{}) != dims) {
      throw CheckpointError("tensor mismatch at " + list[i].name);
    }
    std::vector<double> values(s.numel());
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw CheckpointError("truncated tensor data at " + list[i].name);
    }
    list[i].node->value = nn::Tensor(s, std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes after tensor data");
  }
  model.set_bn_frozen(header.value("bn_frozen", false));
  return model;
}

}  // namespace tsb
