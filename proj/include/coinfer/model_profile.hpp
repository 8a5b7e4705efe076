#pragma once

// Layer-graph data model for a DNN that is split between an edge device and
// an edge server. A split index k means layers [0, k) run on the device and
// the output of layer k-1 is what crosses the link. Split 0 ships the raw
// input (server-based inference); split == layers.size() ships only the task
// result (on-device inference).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "coinfer/error.hpp"

namespace coinfer {

enum class LayerKind { conv, fc, pool, activation, bn, add, other };

inline constexpr std::uint64_t kDefaultResultBits = 64;
inline constexpr std::uint32_t kDefaultFeatureBits = 32;

// Which size to report for a transmitted feature. `entropy_coded` uses the
// optional lossless-coded sizes carried by the profile (PNG for the input,
// Huffman for intermediate features) and falls back to raw bits when absent.
enum class FeatureSizing { raw, entropy_coded };

struct LayerProfile {
  std::string name;
  LayerKind kind = LayerKind::other;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
  std::vector<std::uint64_t> output_shape;
  std::uint32_t bits_per_element = kDefaultFeatureBits;
  bool splittable = false;
  std::optional<std::uint64_t> coded_bits;

  bool operator==(const LayerProfile&) const = default;
};

struct ModelProfile {
  std::string name;
  std::vector<std::uint64_t> input_shape;
  std::uint32_t input_bits_per_element = 8;
  std::optional<std::uint64_t> input_compressed_bits;
  std::uint64_t result_bits = kDefaultResultBits;
  std::vector<LayerProfile> layers;

  std::size_t size() const { return layers.size(); }
  bool operator==(const ModelProfile&) const = default;
};

// ---------------------------------------------------------------------------
// Checked arithmetic

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw OverflowError("integer overflow in " + std::to_string(a) + " * " + std::to_string(b));
  }
  return out;
}

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) {
    throw OverflowError("integer overflow in " + std::to_string(a) + " + " + std::to_string(b));
  }
  return out;
}

inline std::uint64_t shape_elements(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n = checked_mul(n, d);
  return n;
}

// FLOPs of a square-kernel convolution, one multiply and one add per MAC.
inline std::uint64_t conv_flops(std::uint64_t kernel, std::uint64_t c_in, std::uint64_t c_out,
                                std::uint64_t h_out, std::uint64_t w_out) {
  if (kernel == 0 || c_in == 0 || c_out == 0 || h_out == 0 || w_out == 0) {
    throw RangeError("conv_flops: all dimensions must be >= 1");
  }
  std::uint64_t macs = checked_mul(kernel, kernel);
  macs = checked_mul(macs, c_in);
  macs = checked_mul(macs, c_out);
  macs = checked_mul(macs, h_out);
  macs = checked_mul(macs, w_out);
  return checked_mul(macs, 2);
}

// ---------------------------------------------------------------------------
// Kind names

inline std::string_view to_string(LayerKind k) {
  switch (k) {
  case LayerKind::conv: return "conv";
  case LayerKind::fc: return "fc";
  case LayerKind::pool: return "pool";
  case LayerKind::activation: return "activation";
  case LayerKind::bn: return "bn";
  case LayerKind::add: return "add";
  case LayerKind::other: return "other";
  }
  return "other";
}

inline std::optional<LayerKind> parse_layer_kind(std::string_view s) {
  for (auto k : {LayerKind::conv, LayerKind::fc, LayerKind::pool, LayerKind::activation,
                 LayerKind::bn, LayerKind::add, LayerKind::other}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline bool has_weights(LayerKind k) { return k == LayerKind::conv || k == LayerKind::fc; }

// ---------------------------------------------------------------------------
// Validation

inline std::string layer_label(const ModelProfile& p, std::size_t i) {
  return "layer " + std::to_string(i) + " ('" + p.layers[i].name + "')";
}

inline void validate(const ModelProfile& p) {
  if (p.layers.empty()) throw ValidationError("profile '" + p.name + "' has no layers");
  if (p.input_shape.empty()) throw ValidationError("profile '" + p.name + "': empty input shape");
  for (auto d : p.input_shape) {
    if (d == 0) throw ValidationError("profile '" + p.name + "': input shape entries must be >= 1");
  }
  if (p.input_bits_per_element < 1 || p.input_bits_per_element > 64) {
    throw ValidationError("profile '" + p.name + "': input bits_per_element must be in 1..64");
  }
  if (p.result_bits == 0) throw ValidationError("profile '" + p.name + "': result_bits must be >= 1");
  shape_elements(p.input_shape);

  std::set<std::string> names;
  bool any_splittable = false;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    if (l.name.empty()) throw ValidationError("layer " + std::to_string(i) + " has an empty name");
    if (!names.insert(l.name).second) {
      throw ValidationError(layer_label(p, i) + ": duplicate layer name");
    }
    if (l.output_shape.empty()) throw ValidationError(layer_label(p, i) + ": empty output_shape");
    for (auto d : l.output_shape) {
      if (d == 0) throw ValidationError(layer_label(p, i) + ": output_shape entries must be >= 1");
    }
    if (l.bits_per_element < 1 || l.bits_per_element > 64) {
      throw ValidationError(layer_label(p, i) + ": bits_per_element must be in 1..64");
    }
    checked_mul(shape_elements(l.output_shape), l.bits_per_element);
    any_splittable = any_splittable || l.splittable;
  }
  if (!any_splittable) throw ValidationError("profile '" + p.name + "' has no splittable layer");
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline std::uint64_t count_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  const auto& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    throw ValidationError(where + ": field '" + key + "' must be non-negative, got " + v.dump());
  }
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d < 0) throw ValidationError(where + ": field '" + key + "' must be non-negative, got " + v.dump());
    if (d != static_cast<double>(static_cast<std::uint64_t>(d))) {
      throw ValidationError(where + ": field '" + key + "' must be an integer, got " + v.dump());
    }
    return static_cast<std::uint64_t>(d);
  }
  throw ValidationError(where + ": field '" + key + "' must be a number");
}

inline std::vector<std::uint64_t> shape_field(const nlohmann::json& obj, const char* key,
                                              const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_array()) {
    throw ValidationError(where + ": field '" + key + "' must be an array");
  }
  std::vector<std::uint64_t> out;
  const auto& arr = obj.at(key);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    nlohmann::json wrap = {{"v", arr[i]}};
    out.push_back(count_field(wrap, "v", where + " " + key + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline std::uint32_t bits_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto v = count_field(obj, key, where);
  if (v < 1 || v > 64) {
    throw ValidationError(where + ": field '" + key + "' must be in 1..64, got " + std::to_string(v));
  }
  return static_cast<std::uint32_t>(v);
}

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

} // namespace detail

// Parses JSON text, reporting syntax errors as "source:line:col: ...".
inline nlohmann::json parse_json_text(std::string_view text, std::string_view source) {
  try {
    return nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError(std::string(source) + ":" + std::to_string(line) + ":" + std::to_string(col) +
                     ": " + e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  return parse_json_text(read_text_file(path), path.string());
}

inline ModelProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("profile: top level must be an object");
  ModelProfile p;
  p.name = j.value("name", std::string{});
  if (!j.contains("input") || !j.at("input").is_object()) {
    throw ValidationError("profile: missing 'input' object");
  }
  const auto& in = j.at("input");
  p.input_shape = detail::shape_field(in, "shape", "input");
  p.input_bits_per_element = detail::bits_field(in, "bits_per_element", "input");
  if (in.contains("compressed_bits")) p.input_compressed_bits = detail::count_field(in, "compressed_bits", "input");
  if (j.contains("result_bits")) p.result_bits = detail::count_field(j, "result_bits", "profile");
  if (!j.contains("layers") || !j.at("layers").is_array()) {
    throw ValidationError("profile: missing 'layers' array");
  }
  const auto& layers = j.at("layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& lj = layers[i];
    LayerProfile l;
    l.name = lj.is_object() ? lj.value("name", std::string{}) : std::string{};
    const std::string where = "layer " + std::to_string(i) + " ('" + l.name + "')";
    if (!lj.is_object()) throw ValidationError(where + ": must be an object");
    if (!lj.contains("kind") || !lj.at("kind").is_string()) {
      throw ValidationError(where + ": missing string field 'kind'");
    }
    auto kind = parse_layer_kind(lj.at("kind").get<std::string>());
    if (!kind) throw ValidationError(where + ": unknown kind '" + lj.at("kind").get<std::string>() + "'");
    l.kind = *kind;
    l.flops = detail::count_field(lj, "flops", where);
    l.params = detail::count_field(lj, "params", where);
    l.output_shape = detail::shape_field(lj, "output_shape", where);
    l.bits_per_element = lj.contains("bits_per_element") ? detail::bits_field(lj, "bits_per_element", where)
                                                         : kDefaultFeatureBits;
    if (!lj.contains("splittable") || !lj.at("splittable").is_boolean()) {
      throw ValidationError(where + ": missing boolean field 'splittable'");
    }
    l.splittable = lj.at("splittable").get<bool>();
    if (lj.contains("coded_bits")) l.coded_bits = detail::count_field(lj, "coded_bits", where);
    p.layers.push_back(std::move(l));
  }
  validate(p);
  return p;
}

inline nlohmann::ordered_json profile_to_json(const ModelProfile& p) {
  nlohmann::ordered_json j;
  j["name"] = p.name;
  nlohmann::ordered_json in;
  in["shape"] = p.input_shape;
  in["bits_per_element"] = p.input_bits_per_element;
  if (p.input_compressed_bits) in["compressed_bits"] = *p.input_compressed_bits;
  j["input"] = in;
  j["result_bits"] = p.result_bits;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : p.layers) {
    nlohmann::ordered_json lj;
    lj["name"] = l.name;
    lj["kind"] = to_string(l.kind);
    lj["flops"] = l.flops;
    lj["params"] = l.params;
    lj["output_shape"] = l.output_shape;
    lj["bits_per_element"] = l.bits_per_element;
    lj["splittable"] = l.splittable;
    if (l.coded_bits) lj["coded_bits"] = *l.coded_bits;
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j;
}

inline ModelProfile parse_profile(std::string_view text, std::string_view source = "<memory>") {
  auto j = parse_json_text(text, source);
  try {
    return profile_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(source) + ": " + e.what());
  }
}

inline ModelProfile load_profile(const std::filesystem::path& path) {
  return parse_profile(read_text_file(path), path.string());
}

inline std::string dump_profile(const ModelProfile& p) { return profile_to_json(p).dump(2) + "\n"; }

inline void save_profile(const ModelProfile& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << dump_profile(p);
}

// ---------------------------------------------------------------------------
// Per-split quantities

inline void check_split(const ModelProfile& p, std::size_t split) {
  if (split > p.layers.size()) {
    throw RangeError("split " + std::to_string(split) + " out of range [0, " + std::to_string(p.layers.size()) +
                     "]");
  }
}

inline bool is_endpoint(const ModelProfile& p, std::size_t split) {
  return split == 0 || split == p.layers.size();
}

inline bool is_valid_split(const ModelProfile& p, std::size_t split) {
  if (split > p.layers.size()) return false;
  return is_endpoint(p, split) || p.layers[split - 1].splittable;
}

// Ascending list of usable split indices, endpoints included.
inline std::vector<std::size_t> valid_splits(const ModelProfile& p) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k <= p.layers.size(); ++k) {
    if (is_valid_split(p, k)) out.push_back(k);
  }
  return out;
}

inline std::uint64_t on_device_flops(const ModelProfile& p, std::size_t split) {
  check_split(p, split);
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < split; ++i) sum = checked_add(sum, p.layers[i].flops);
  return sum;
}

inline std::uint64_t total_flops(const ModelProfile& p) { return on_device_flops(p, p.layers.size()); }

inline std::uint64_t on_device_params(const ModelProfile& p, std::size_t split) {
  check_split(p, split);
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < split; ++i) sum = checked_add(sum, p.layers[i].params);
  return sum;
}

inline std::uint64_t total_params(const ModelProfile& p) { return on_device_params(p, p.layers.size()); }

// Elements of the tensor crossing the link at `split` (input elements at 0).
// At the on-device endpoint this is the final layer's output.
inline std::uint64_t feature_elements(const ModelProfile& p, std::size_t split) {
  check_split(p, split);
  if (split == 0) return shape_elements(p.input_shape);
  return shape_elements(p.layers[split - 1].output_shape);
}

inline std::uint64_t feature_bits(const ModelProfile& p, std::size_t split,
                                  FeatureSizing sizing = FeatureSizing::raw) {
  check_split(p, split);
  if (split == p.layers.size()) return p.result_bits;
  if (split == 0) {
    if (sizing == FeatureSizing::entropy_coded && p.input_compressed_bits) return *p.input_compressed_bits;
    return checked_mul(shape_elements(p.input_shape), p.input_bits_per_element);
  }
  const auto& l = p.layers[split - 1];
  if (sizing == FeatureSizing::entropy_coded && l.coded_bits) return *l.coded_bits;
  return checked_mul(shape_elements(l.output_shape), l.bits_per_element);
}

struct AmplificationPoint {
  std::size_t split = 0;
  double ratio = 0.0;
};

// Splits whose feature is strictly larger than the raw input, largest first.
inline std::vector<AmplificationPoint> amplification_points(const ModelProfile& p,
                                                            FeatureSizing sizing = FeatureSizing::raw) {
  const double input = static_cast<double>(feature_bits(p, 0, sizing));
  std::vector<AmplificationPoint> out;
  for (auto k : valid_splits(p)) {
    const double r = static_cast<double>(feature_bits(p, k, sizing)) / input;
    if (r > 1.0) out.push_back({k, r});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ratio > b.ratio; });
  return out;
}

} // namespace coinfer
