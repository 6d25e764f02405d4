// Copyright 2026 The evskill Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "evskill/diffcore/checkpoint.hpp"

#include <cstring>

#include "evskill/binary_io.hpp"
#include "evskill/errors.hpp"

namespace evskill::diffcore {

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.string(ckpt.header.dump());
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    w.string(name);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(static_cast<float>(m(i, j)));
    }
  }
  io::write_file_atomic(path, w.data());
}

Checkpoint parse_checkpoint(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  const std::string magic = r.bytes(8, "checkpoint magic");
  if (magic != std::string_view(kCheckpointMagic, 8)) {
    throw ParseError("not a checkpoint file (bad magic)", 0);
  }
  const std::uint64_t vat = r.offset();
  const std::uint32_t version = r.u32("checkpoint version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), vat);
  }
  Checkpoint ckpt;
  const std::uint64_t hat = r.offset();
  const std::string header = r.string("checkpoint header");
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what(),
                     hat + 4 + e.byte);
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = r.string("tensor name", 4096);
    const std::uint64_t sat = r.offset();
    const std::uint32_t rows = r.u32("tensor rows");
    const std::uint32_t cols = r.u32("tensor cols");
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
    if (n * 4 > r.remaining()) {
      throw ParseError("tensor '" + name + "' shape " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " exceeds remaining bytes",
                       sat);
    }
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32("tensor payload");
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last tensor", r.offset());
  return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path));
}

void export_params(Checkpoint& ckpt, const std::string& prefix, const ParamSet& params) {
  for (const auto& p : params) ckpt.tensors.emplace_back(prefix + p.name, p.value);
}

void import_params(const Checkpoint& ckpt, const std::string& prefix, ParamSet& params) {
  for (auto& p : params) {
    const Matrix* m = ckpt.find(prefix + p.name);
    if (m == nullptr) throw InvalidInput("checkpoint lacks tensor '" + prefix + p.name + "'");
    if (m->rows() != p.value.rows() || m->cols() != p.value.cols()) {
      throw InvalidInput("checkpoint tensor '" + prefix + p.name + "' has shape " +
                         std::to_string(m->rows()) + "x" + std::to_string(m->cols()) +
                         ", expected " + std::to_string(p.value.rows()) + "x" +
                         std::to_string(p.value.cols()));
    }
    p.value = *m;
    p.grad.setZero(m->rows(), m->cols());
  }
}

nlohmann::json to_json(const SeqModelConfig& c) {
  return {{"in_dim", c.in_dim}, {"out_dim", c.out_dim}, {"width", c.width},
          {"depth", c.depth},   {"heads", c.heads},     {"ffn_mult", c.ffn_mult}};
}

SeqModelConfig seq_model_config_from_json(const nlohmann::json& j) {
  SeqModelConfig c;
  c.in_dim = j.at("in_dim").get<int>();
  c.out_dim = j.at("out_dim").get<int>();
  c.width = j.at("width").get<int>();
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  return c;
}

void round_to_storage(ParamSet& params) {
  for (auto& p : params) {
    p.value = p.value.cast<float>().cast<double>();
  }
}

}  // namespace evskill::diffcore
