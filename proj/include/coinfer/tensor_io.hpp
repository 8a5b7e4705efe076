#pragma once

// Flat little-endian f32 container with a JSON sidecar:
//
//   { "data_file": "weights.bin",
//     "tensors": [ { "layer_name": "conv1", "dims": [64,3,3,3],
//                    "dtype": "f32", "offset": 0 }, ... ] }
//
// `offset` is a byte offset into data_file; data_file is resolved relative to
// the sidecar's directory.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coinfer/error.hpp"
#include "coinfer/model_profile.hpp"

namespace coinfer {

static_assert(std::endian::native == std::endian::little, "tensor container assumes a little-endian host");

struct WeightTensor {
  std::string layer_name;
  std::vector<std::size_t> dims;
  std::vector<float> values;

  std::size_t channels() const { return dims.empty() ? 0 : dims[0]; }
  std::size_t channel_size() const { return channels() == 0 ? 0 : values.size() / channels(); }

  void validate() const {
    if (dims.empty() || dims[0] < 1) throw ValidationError("tensor '" + layer_name + "': dims[0] must be >= 1");
    std::size_t n = 1;
    for (auto d : dims) {
      if (d == 0) throw ValidationError("tensor '" + layer_name + "': zero dimension");
      n *= d;
    }
    if (n != values.size()) {
      throw ValidationError("tensor '" + layer_name + "': product(dims)=" + std::to_string(n) +
                            " but has " + std::to_string(values.size()) + " values");
    }
  }

  bool operator==(const WeightTensor&) const = default;
};

inline std::vector<WeightTensor> read_tensors(const std::filesystem::path& sidecar) {
  const auto meta = load_json_file(sidecar);
  if (!meta.is_object() || !meta.contains("data_file") || !meta.contains("tensors")) {
    throw ValidationError(sidecar.string() + ": sidecar needs 'data_file' and 'tensors'");
  }
  const auto data_path = sidecar.parent_path() / meta.at("data_file").get<std::string>();
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw ParseError(data_path.string() + ": cannot open data file");
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());

  std::vector<WeightTensor> out;
  for (const auto& tj : meta.at("tensors")) {
    WeightTensor t;
    t.layer_name = tj.at("layer_name").get<std::string>();
    t.dims = tj.at("dims").get<std::vector<std::size_t>>();
    if (tj.value("dtype", std::string("f32")) != "f32") {
      throw ValidationError(sidecar.string() + ": tensor '" + t.layer_name + "' has unsupported dtype");
    }
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    const auto offset = tj.at("offset").get<std::uint64_t>();
    if (offset + n * sizeof(float) > file_size) {
      throw ValidationError(sidecar.string() + ": tensor '" + t.layer_name + "' extends past end of data file");
    }
    t.values.resize(n);
    in.seekg(static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * sizeof(float)));
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

// Writes tensors back to back into `data_file` next to the sidecar.
inline void write_tensors(const std::filesystem::path& sidecar, const std::string& data_file,
                          const std::vector<WeightTensor>& tensors) {
  const auto data_path = sidecar.parent_path() / data_file;
  std::ofstream data(data_path, std::ios::binary);
  if (!data) throw Error(data_path.string() + ": cannot open for writing");
  nlohmann::ordered_json meta;
  meta["data_file"] = data_file;
  auto list = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    t.validate();
    nlohmann::ordered_json tj;
    tj["layer_name"] = t.layer_name;
    tj["dims"] = t.dims;
    tj["dtype"] = "f32";
    tj["offset"] = offset;
    list.push_back(std::move(tj));
    data.write(reinterpret_cast<const char*>(t.values.data()),
               static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    offset += t.values.size() * sizeof(float);
  }
  meta["tensors"] = std::move(list);
  std::ofstream side(sidecar, std::ios::binary);
  if (!side) throw Error(sidecar.string() + ": cannot open for writing");
  side << meta.dump(2) << "\n";
}

} // namespace coinfer
