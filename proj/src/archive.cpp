// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Model archive:   "IMCMODEL" u32 version, u32 manifest_len, manifest JSON,
//                  u32 blob_len, then little-endian 16-bit blobs referenced
//                  by (offset, count) pairs in the manifest.
// Dataset file:    "IMCDATA1" u32 count, u32 ndims, u32 dims[ndims],
//                  i32 scale, u32 class_count, then per sample the int16
//                  features followed by a u32 label.

#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "imc/error.hpp"
#include "imc/model.hpp"

namespace imc {

namespace {

constexpr char kModelMagic[8] = {'I', 'M', 'C', 'M', 'O', 'D', 'E', 'L'};
constexpr char kDataMagic[8] = {'I', 'M', 'C', 'D', 'A', 'T', 'A', '1'};
constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string_view what) : bytes_(bytes), what_(what) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw ValidationError(fmt::format("{} truncated at byte {} (need {} more)", what_, pos_, n));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    const auto lo = static_cast<unsigned char>(bytes_[pos_]);
    const auto hi = static_cast<unsigned char>(bytes_[pos_ + 1]);
    pos_ += 2;
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

class BlobWriter {
 public:
  template <typename T>
  nlohmann::json add(const std::vector<T>& values) {
    const std::size_t offset = blob_.size();
    for (T v : values) put_u16(blob_, static_cast<std::uint16_t>(v));
    return {{"offset", offset}, {"count", values.size()}};
  }
  const std::string& bytes() const { return blob_; }

 private:
  std::string blob_;
};

template <typename T>
std::vector<T> read_blob(std::string_view blob, const nlohmann::json& ref, const std::string& layer) {
  const auto offset = ref.at("offset").get<std::size_t>();
  const auto count = ref.at("count").get<std::size_t>();
  if (offset % 2 != 0 || offset + 2 * count > blob.size()) {
    throw ValidationError(fmt::format("layer '{}': blob [{}, +{}) truncated or out of range ({} blob bytes)", layer,
                                      offset, 2 * count, blob.size()));
  }
  std::vector<T> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto lo = static_cast<unsigned char>(blob[offset + 2 * i]);
    const auto hi = static_cast<unsigned char>(blob[offset + 2 * i + 1]);
    out[i] = static_cast<T>(static_cast<std::uint16_t>(lo | (hi << 8)));
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::string serialize_model(const Network& net) {
  BlobWriter blobs;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : l.stages) {
      nlohmann::json js{{"kind", to_string(s.kind)}, {"out_scale", s.out_scale}, {"relu", s.relu},
                        {"bias", blobs.add(s.bias)}};
      if (s.kind == StageKind::kSparse) {
        js["rows"] = s.sparse.rows;
        js["cols"] = s.sparse.cols;
        js["weight_scale"] = s.sparse.scale;
        js["offsets"] = blobs.add(s.sparse.offsets);
        js["columns"] = blobs.add(s.sparse.columns);
        js["values"] = blobs.add(s.sparse.values);
      } else {
        js["shape"] = s.weights.shape;
        js["weight_scale"] = s.weights.scale;
        js["weights"] = blobs.add(s.weights.data);
      }
      stages.push_back(std::move(js));
    }
    layers.push_back({{"name", l.name}, {"kind", to_string(l.kind)}, {"stages", std::move(stages)}});
  }
  const nlohmann::json manifest{{"name", net.name},
                                {"input_shape", net.input_shape},
                                {"input_scale", net.input_scale},
                                {"class_count", net.class_count},
                                {"layers", std::move(layers)}};
  const std::string text = manifest.dump();

  std::string out(kModelMagic, sizeof(kModelMagic));
  put_u32(out, kModelVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put_u32(out, static_cast<std::uint32_t>(blobs.bytes().size()));
  out += blobs.bytes();
  return out;
}

Network parse_model(std::string_view bytes) {
  Reader r(bytes, "model archive");
  if (r.take(8) != std::string_view(kModelMagic, 8)) throw ValidationError("not a model archive (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) throw ValidationError(fmt::format("unsupported model archive version {}", version));
  const std::string_view text = r.take(r.u32());
  const std::uint32_t blob_len = r.u32();
  const std::string_view blob = r.take(blob_len);
  if (r.remaining() != 0) throw ValidationError("trailing bytes after model archive");

  nlohmann::json m;
  try {
    m = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed model manifest: {}", e.what()));
  }

  Network net;
  try {
    net.name = m.at("name").get<std::string>();
    net.input_shape = m.at("input_shape").get<std::vector<int>>();
    net.input_scale = m.at("input_scale").get<int>();
    net.class_count = m.at("class_count").get<int>();
    for (const auto& jl : m.at("layers")) {
      Layer l;
      l.name = jl.at("name").get<std::string>();
      try {
        l.kind = layer_kind_from_string(jl.at("kind").get<std::string>());
        for (const auto& js : jl.at("stages")) {
          Stage s;
          const auto kind = js.at("kind").get<std::string>();
          s.out_scale = js.at("out_scale").get<int>();
          s.relu = js.at("relu").get<bool>();
          s.bias = read_blob<q15>(blob, js.at("bias"), l.name);
          if (kind == "sparse") {
            s.kind = StageKind::kSparse;
            s.sparse.rows = js.at("rows").get<int>();
            s.sparse.cols = js.at("cols").get<int>();
            s.sparse.scale = js.at("weight_scale").get<int>();
            s.sparse.offsets = read_blob<std::uint16_t>(blob, js.at("offsets"), l.name);
            s.sparse.columns = read_blob<std::uint16_t>(blob, js.at("columns"), l.name);
            s.sparse.values = read_blob<q15>(blob, js.at("values"), l.name);
          } else if (kind == "conv" || kind == "dense") {
            s.kind = kind == "conv" ? StageKind::kConv : StageKind::kDense;
            s.weights.shape = js.at("shape").get<std::vector<int>>();
            s.weights.scale = js.at("weight_scale").get<int>();
            s.weights.data = read_blob<q15>(blob, js.at("weights"), l.name);
          } else {
            throw ValidationError(fmt::format("layer '{}': unknown stage kind '{}'", l.name, kind));
          }
          l.stages.push_back(std::move(s));
        }
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("layer '{}': malformed manifest entry: {}", l.name, e.what()));
      }
      net.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed model manifest: {}", e.what()));
  }
  net.validate();
  return net;
}

void save_model(const Network& net, const std::filesystem::path& path) { write_file(path, serialize_model(net)); }

Network load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

std::string serialize_dataset(const Dataset& d) {
  std::string out(kDataMagic, sizeof(kDataMagic));
  put_u32(out, static_cast<std::uint32_t>(d.samples.size()));
  put_u32(out, static_cast<std::uint32_t>(d.feature_shape.size()));
  for (int dim : d.feature_shape) put_u32(out, static_cast<std::uint32_t>(dim));
  put_u32(out, static_cast<std::uint32_t>(d.scale));
  put_u32(out, static_cast<std::uint32_t>(d.class_count));
  const std::size_t features = element_count(d.feature_shape);
  for (const auto& s : d.samples) {
    if (s.input.size() != features) throw ContractViolation("sample size disagrees with the feature shape");
    for (q15 v : s.input.data) put_u16(out, static_cast<std::uint16_t>(v));
    put_u32(out, static_cast<std::uint32_t>(s.label));
  }
  return out;
}

Dataset parse_dataset(std::string_view bytes) {
  Reader r(bytes, "dataset");
  if (r.take(8) != std::string_view(kDataMagic, 8)) throw ValidationError("not a dataset file (bad magic)");
  Dataset d;
  const std::uint32_t count = r.u32();
  const std::uint32_t ndims = r.u32();
  if (ndims == 0 || ndims > 3) throw ValidationError(fmt::format("dataset has {} feature dims", ndims));
  for (std::uint32_t i = 0; i < ndims; ++i) d.feature_shape.push_back(static_cast<int>(r.u32()));
  d.scale = static_cast<std::int32_t>(r.u32());
  d.class_count = static_cast<int>(r.u32());
  const std::size_t features = element_count(d.feature_shape);
  r.need(static_cast<std::size_t>(count) * (2 * features + 4));
  d.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample s;
    s.input = FixedTensor(d.feature_shape, d.scale);
    for (auto& v : s.input.data) v = static_cast<q15>(r.u16());
    s.label = static_cast<int>(r.u32());
    if (s.label < 0 || s.label >= d.class_count) {
      throw ValidationError(fmt::format("sample {} has label {} outside {} classes", i, s.label, d.class_count));
    }
    d.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw ValidationError("trailing bytes after dataset");
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) { write_file(path, serialize_dataset(d)); }

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

}  // namespace imc
