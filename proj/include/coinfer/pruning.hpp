#pragma once

// Incremental structured channel pruning of the on-device sub-model.
//
// Each iteration i:
//   1. rank output channels by l2-norm and mask the smallest
//      floor(S_i * C) of them,
//   2. hand the tensors to an update hook with masked channels zeroed; only
//      the hook's writes to unmasked channels are kept,
//   3. restore masked channels to their values from the start of the
//      iteration.
// Training itself is outside this library; the hook stands in for one
// forward/backward pass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "coinfer/error.hpp"
#include "coinfer/model_profile.hpp"
#include "coinfer/random.hpp"
#include "coinfer/tensor_io.hpp"

namespace coinfer {

struct ChannelMask {
  std::string layer_name;
  std::vector<bool> kept;

  std::size_t size() const { return kept.size(); }
  std::size_t kept_count() const { return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), true)); }
  double kept_fraction() const { return static_cast<double>(kept_count()) / static_cast<double>(kept.size()); }

  bool operator==(const ChannelMask&) const = default;
};

class SparsitySchedule {
public:
  SparsitySchedule() = default;
  explicit SparsitySchedule(std::vector<double> ratios) : ratios_(std::move(ratios)) {
    for (std::size_t i = 0; i < ratios_.size(); ++i) {
      const double r = ratios_[i];
      if (!(r >= 0.0 && r < 1.0)) {
        throw RangeError("sparsity ratio " + std::to_string(r) + " at step " + std::to_string(i) +
                         " is outside [0, 1)");
      }
      if (i > 0 && r < ratios_[i - 1]) {
        throw ValidationError("sparsity schedule must be non-decreasing (step " + std::to_string(i) + ")");
      }
    }
  }

  // n evenly spaced ratios ending at `final_ratio`: final/n, 2*final/n, ...
  static SparsitySchedule linear_ramp(double final_ratio, std::size_t steps) {
    if (steps == 0) throw RangeError("linear_ramp needs at least one step");
    std::vector<double> r(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      r[i] = final_ratio * static_cast<double>(i + 1) / static_cast<double>(steps);
    }
    r.back() = final_ratio;
    return SparsitySchedule(std::move(r));
  }

  const std::vector<double>& ratios() const { return ratios_; }
  std::size_t size() const { return ratios_.size(); }
  bool empty() const { return ratios_.empty(); }
  double operator[](std::size_t i) const { return ratios_.at(i); }
  double final_ratio() const { return ratios_.back(); }

private:
  std::vector<double> ratios_;
};

// Per-output-channel l2 norms. Each channel is reduced left to right in
// double precision so the result does not depend on scheduling.
inline std::vector<double> channel_norms(const WeightTensor& t) {
  t.validate();
  const std::size_t c = t.channels(), per = t.channel_size();
  std::vector<double> norms(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    const float* w = t.values.data() + ch * per;
    for (std::size_t k = 0; k < per; ++k) acc += static_cast<double>(w[k]) * static_cast<double>(w[k]);
    norms[ch] = std::sqrt(acc);
  }
  return norms;
}

inline std::size_t masked_channel_count(std::size_t channels, double ratio) {
  const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(channels)));
  return std::min(n, channels - 1);
}

// Masks the floor(ratio * C) smallest-norm channels; equal norms mask the
// lower index first. At least one channel stays.
inline ChannelMask select_mask(std::span<const double> norms, double ratio, std::string layer_name = {}) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw RangeError("select_mask: ratio " + std::to_string(ratio) + " not in [0, 1)");
  if (norms.empty()) throw ValidationError("select_mask: no channels");
  std::vector<std::size_t> order(norms.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
  ChannelMask m{std::move(layer_name), std::vector<bool>(norms.size(), true)};
  const std::size_t n = masked_channel_count(norms.size(), ratio);
  for (std::size_t i = 0; i < n; ++i) m.kept[order[i]] = false;
  return m;
}

inline ChannelMask select_mask(const std::vector<double>& norms, double ratio, std::string layer_name = {}) {
  return select_mask(std::span<const double>(norms), ratio, std::move(layer_name));
}

// Called once per iteration with masked channels zeroed. May modify any
// weight; writes to masked channels are discarded.
using UpdateHook = std::function<void(std::span<WeightTensor> visible, std::size_t iteration)>;

inline UpdateHook identity_hook() {
  return [](std::span<WeightTensor>, std::size_t) {};
}

// Adds N(0, sigma^2) noise to every visible weight, keyed by
// (seed, iteration, tensor, element).
inline UpdateHook gaussian_perturbation_hook(std::uint64_t seed, double sigma) {
  return [seed, sigma](std::span<WeightTensor> visible, std::size_t iteration) {
    for (std::size_t t = 0; t < visible.size(); ++t) {
      const auto stream = derive_seed(derive_seed(seed, iteration), t);
      auto& vals = visible[t].values;
      for (std::size_t k = 0; k < vals.size(); ++k) {
        vals[k] += static_cast<float>(sigma * counter_normal(stream, k));
      }
    }
  };
}

class HookError : public Error {
public:
  HookError(std::size_t iteration, const std::string& what)
      : Error("update hook failed at iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

private:
  std::size_t iteration_;
};

inline void zero_masked(WeightTensor& t, const ChannelMask& m) {
  const std::size_t per = t.channel_size();
  for (std::size_t ch = 0; ch < t.channels(); ++ch) {
    if (!m.kept[ch]) std::fill_n(t.values.begin() + static_cast<std::ptrdiff_t>(ch * per), per, 0.0f);
  }
}

struct IterationResult {
  std::vector<WeightTensor> tensors;
  std::vector<ChannelMask> masks;
};

inline IterationResult prune_iteration(std::vector<WeightTensor> tensors, const SparsitySchedule& schedule,
                                       std::size_t i, const UpdateHook& hook) {
  if (i >= schedule.size()) {
    throw RangeError("iteration " + std::to_string(i) + " beyond schedule of length " +
                     std::to_string(schedule.size()));
  }
  const double ratio = schedule[i];
  IterationResult out;
  out.masks.reserve(tensors.size());
  for (const auto& t : tensors) out.masks.push_back(select_mask(channel_norms(t), ratio, t.layer_name));

  std::vector<WeightTensor> visible = tensors;
  for (std::size_t t = 0; t < visible.size(); ++t) zero_masked(visible[t], out.masks[t]);
  try {
    if (hook) hook(std::span<WeightTensor>(visible), i);
  } catch (const std::exception& e) {
    throw HookError(i, e.what());
  }

  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& orig = tensors[t];
    const auto& upd = visible[t];
    if (upd.values.size() != orig.values.size()) {
      throw HookError(i, "hook resized tensor '" + orig.layer_name + "'");
    }
    const std::size_t per = orig.channel_size();
    for (std::size_t ch = 0; ch < orig.channels(); ++ch) {
      if (!out.masks[t].kept[ch]) continue;
      std::copy_n(upd.values.begin() + static_cast<std::ptrdiff_t>(ch * per), per,
                  orig.values.begin() + static_cast<std::ptrdiff_t>(ch * per));
    }
  }
  out.tensors = std::move(tensors);
  return out;
}

struct LayerPruneStats {
  std::string layer_name;
  std::size_t total_channels = 0;
  std::size_t kept_channels = 0;
  double flops_factor = 1.0;

  bool operator==(const LayerPruneStats&) const = default;
};

// Shape of the split layer's output, used to report the transmitted size.
struct SplitOutput {
  std::uint64_t elements_per_channel = 1;
  std::uint32_t bits_per_element = kDefaultFeatureBits;
};

struct PruneReport {
  std::vector<double> schedule;
  std::vector<ChannelMask> masks;
  std::vector<LayerPruneStats> layers;
  std::optional<std::uint64_t> split_output_bits;

  const LayerPruneStats* find(const std::string& name) const {
    for (const auto& l : layers) {
      if (l.layer_name == name) return &l;
    }
    return nullptr;
  }
  bool operator==(const PruneReport&) const = default;
};

// Builds the report from final masks. Tensors are in execution order; the
// input-channel factor of tensor t is the kept fraction of tensor t-1.
inline PruneReport make_report(const std::vector<ChannelMask>& masks, const SparsitySchedule& schedule,
                               std::optional<SplitOutput> split_output) {
  PruneReport r;
  r.schedule = schedule.ratios();
  r.masks = masks;
  double in_fraction = 1.0;
  for (const auto& m : masks) {
    const double out_fraction = m.kept_fraction();
    r.layers.push_back({m.layer_name, m.size(), m.kept_count(), out_fraction * in_fraction});
    in_fraction = out_fraction;
  }
  if (split_output && !masks.empty()) {
    r.split_output_bits = checked_mul(checked_mul(masks.back().kept_count(), split_output->elements_per_channel),
                                      split_output->bits_per_element);
  }
  return r;
}

// Runs every scheduled iteration in place and reports the final masks.
inline PruneReport run_schedule(std::vector<WeightTensor>& tensors, const SparsitySchedule& schedule,
                                const UpdateHook& hook, std::optional<SplitOutput> split_output = std::nullopt) {
  if (schedule.empty()) throw ValidationError("run_schedule: empty sparsity schedule");
  if (tensors.empty()) throw ValidationError("run_schedule: no tensors");
  std::vector<ChannelMask> masks;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    auto step = prune_iteration(std::move(tensors), schedule, i, hook);
    tensors = std::move(step.tensors);
    masks = std::move(step.masks);
  }
  return make_report(masks, schedule, split_output);
}

// ---------------------------------------------------------------------------
// Profile rewriting

// Scales on-device layers by their pruning factors and shrinks the channel
// dimension of the split layer's output. Layers without weights (bn,
// activation, pool, add) and weighted layers absent from the report follow
// the kept fraction of the most recent reported layer. Server-side layers are
// untouched.
inline ModelProfile apply_to_profile(const ModelProfile& profile, const PruneReport& report, std::size_t split) {
  check_split(profile, split);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < split; ++i) index.emplace(profile.layers[i].name, i);
  std::unordered_map<std::string, std::size_t> reported;
  for (std::size_t r = 0; r < report.layers.size(); ++r) {
    const auto& name = report.layers[r].layer_name;
    if (!index.contains(name)) {
      throw ValidationError("prune report layer '" + name + "' is not an on-device layer of profile '" +
                            profile.name + "' at split " + std::to_string(split));
    }
    reported.emplace(name, r);
  }

  auto scale = [](std::uint64_t v, double f) { return static_cast<std::uint64_t>(std::llround(static_cast<double>(v) * f)); };

  ModelProfile out = profile;
  double channel_fraction = 1.0;
  const ChannelMask* last_mask = nullptr;
  for (std::size_t i = 0; i < split; ++i) {
    auto& l = out.layers[i];
    if (auto it = reported.find(l.name); it != reported.end()) {
      const auto& stats = report.layers[it->second];
      const auto& mask = report.masks[it->second];
      if (mask.size() != l.output_shape[0]) {
        throw ValidationError("prune report layer '" + l.name + "' has " + std::to_string(mask.size()) +
                              " channels but profile says " + std::to_string(l.output_shape[0]));
      }
      l.flops = scale(l.flops, stats.flops_factor);
      l.params = scale(l.params, stats.flops_factor);
      channel_fraction = mask.kept_fraction();
      last_mask = &mask;
    } else {
      l.flops = scale(l.flops, channel_fraction);
      l.params = scale(l.params, channel_fraction);
    }
  }

  if (split > 0 && split < profile.layers.size() && last_mask != nullptr) {
    auto& l = out.layers[split - 1];
    if (l.output_shape[0] != last_mask->size()) {
      throw ValidationError("split layer '" + l.name + "' has " + std::to_string(l.output_shape[0]) +
                            " channels; governing mask '" + last_mask->layer_name + "' has " +
                            std::to_string(last_mask->size()));
    }
    const auto total = l.output_shape[0];
    l.output_shape[0] = last_mask->kept_count();
    if (l.coded_bits) *l.coded_bits = *l.coded_bits * l.output_shape[0] / total;
  }
  validate(out);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json report_to_json(const PruneReport& r) {
  nlohmann::ordered_json j;
  j["schedule"] = r.schedule;
  auto layers = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.layers.size(); ++i) {
    nlohmann::ordered_json lj;
    lj["layer_name"] = r.layers[i].layer_name;
    lj["total_channels"] = r.layers[i].total_channels;
    lj["kept_channels"] = r.layers[i].kept_channels;
    lj["flops_factor"] = r.layers[i].flops_factor;
    std::string bits;
    for (bool k : r.masks[i].kept) bits.push_back(k ? '1' : '0');
    lj["mask"] = bits;
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  if (r.split_output_bits) j["split_output_bits"] = *r.split_output_bits;
  return j;
}

inline PruneReport report_from_json(const nlohmann::json& j) {
  PruneReport r;
  r.schedule = j.value("schedule", std::vector<double>{});
  for (const auto& lj : j.at("layers")) {
    ChannelMask m{lj.at("layer_name").get<std::string>(), {}};
    for (char c : lj.at("mask").get<std::string>()) {
      if (c != '0' && c != '1') throw ParseError("prune report: mask of '" + m.layer_name + "' must be 0/1");
      m.kept.push_back(c == '1');
    }
    LayerPruneStats s{m.layer_name, lj.at("total_channels").get<std::size_t>(),
                      lj.at("kept_channels").get<std::size_t>(), lj.at("flops_factor").get<double>()};
    if (s.total_channels != m.size() || s.kept_channels != m.kept_count() || s.kept_channels == 0) {
      throw ValidationError("prune report: counts of '" + m.layer_name + "' disagree with its mask");
    }
    if (!(s.flops_factor > 0.0 && s.flops_factor <= 1.0)) {
      throw ValidationError("prune report: flops_factor of '" + m.layer_name + "' outside (0, 1]");
    }
    r.masks.push_back(std::move(m));
    r.layers.push_back(std::move(s));
  }
  if (j.contains("split_output_bits")) r.split_output_bits = j.at("split_output_bits").get<std::uint64_t>();
  return r;
}

} // namespace coinfer
