#pragma once

// Brute-force deployment planning over (split point, sparsity, codec).
//
// Latency is sequential: device compute, then transmission, then server
// compute. A plan is feasible when the on-device sub-model fits in device
// memory, the encoder adds at most 1% on-device FLOPs, and the predicted
// accuracy meets the threshold. Accuracy comes from a user-supplied table;
// nothing here trains or evaluates a network.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "coinfer/channel.hpp"
#include "coinfer/error.hpp"
#include "coinfer/feature_codec.hpp"
#include "coinfer/model_profile.hpp"
#include "coinfer/pruning.hpp"

namespace coinfer {

inline constexpr double kMaxEncoderOverhead = 0.01;
inline constexpr double kBytesPerParam = 4.0;

struct EnvironmentProfile {
  double device_flops_per_s = 0.0;
  double server_flops_per_s = 0.0;
  std::uint64_t device_memory_bytes = 0;
  double memory_overhead_factor = 1.0;
  ChannelSpec channel;

  void validate() const {
    if (!(device_flops_per_s > 0.0)) throw ValidationError("environment: device_flops_per_s must be > 0");
    if (!(server_flops_per_s > 0.0)) throw ValidationError("environment: server_flops_per_s must be > 0");
    if (device_memory_bytes == 0) throw ValidationError("environment: device_memory_bytes must be > 0");
    if (!(memory_overhead_factor >= 1.0)) throw ValidationError("environment: memory_overhead_factor must be >= 1");
    channel.validate();
  }
  bool operator==(const EnvironmentProfile&) const = default;
};

// Overhead factor for which the first `fraction` of the model's parameters
// (params * 4 bytes * factor) exactly fills `memory_bytes`.
inline double calibrate_memory_overhead(const ModelProfile& profile, std::uint64_t memory_bytes, double fraction) {
  const double raw = static_cast<double>(total_params(profile)) * kBytesPerParam * fraction;
  return static_cast<double>(memory_bytes) / raw;
}

// ---------------------------------------------------------------------------
// Accuracy table

class UncoveredConfigurationError : public Error {
public:
  using Error::Error;
};

// Predicted accuracy on a grid over (split, sparsity, reduced_dim,
// quant_bits), multilinear between grid points. "No codec" is encoded as
// reduced_dim = 0, quant_bits = 0. An axis left empty means the table does
// not vary along it. Queries outside the grid hull are errors.
class AccuracyModel {
public:
  static constexpr std::size_t kAxes = 4;
  static constexpr std::array<std::string_view, kAxes> kAxisNames = {"split", "sparsity", "reduced_dim",
                                                                     "quant_bits"};

  AccuracyModel() = default;
  AccuracyModel(double threshold, std::array<std::vector<double>, kAxes> axes, std::vector<double> values)
      : threshold_(threshold), axes_(std::move(axes)), values_(std::move(values)) {
    if (!(threshold_ >= 0.0 && threshold_ <= 1.0)) throw ValidationError("accuracy: threshold must be in [0, 1]");
    std::size_t n = 1;
    for (std::size_t a = 0; a < kAxes; ++a) {
      const auto& ax = axes_[a];
      for (std::size_t i = 1; i < ax.size(); ++i) {
        if (!(ax[i] > ax[i - 1])) {
          throw ValidationError("accuracy: axis '" + std::string(kAxisNames[a]) + "' must be strictly increasing");
        }
      }
      n *= std::max<std::size_t>(ax.size(), 1);
    }
    if (values_.size() != n) {
      throw ValidationError("accuracy: expected " + std::to_string(n) + " values, got " +
                            std::to_string(values_.size()));
    }
    for (double v : values_) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("accuracy: values must be in [0, 1]");
    }
  }

  // Table that predicts `value` everywhere.
  static AccuracyModel constant(double value, double threshold) { return AccuracyModel(threshold, {}, {value}); }

  double threshold() const { return threshold_; }
  const std::array<std::vector<double>, kAxes>& axes() const { return axes_; }
  const std::vector<double>& values() const { return values_; }

  double predict(std::size_t split, double sparsity, std::uint64_t reduced_dim, std::uint32_t quant_bits) const {
    const std::array<double, kAxes> q = {static_cast<double>(split), sparsity, static_cast<double>(reduced_dim),
                                         static_cast<double>(quant_bits)};
    std::array<std::size_t, kAxes> lo{};
    std::array<double, kAxes> t{};
    std::array<std::size_t, kAxes> stride{};
    std::size_t s = 1;
    for (std::size_t a = kAxes; a-- > 0;) {
      stride[a] = s;
      s *= std::max<std::size_t>(axes_[a].size(), 1);
    }
    for (std::size_t a = 0; a < kAxes; ++a) {
      const auto& ax = axes_[a];
      if (ax.empty()) continue;
      constexpr double eps = 1e-12;
      if (q[a] < ax.front() - eps || q[a] > ax.back() + eps) {
        throw UncoveredConfigurationError("uncovered configuration: " + std::string(kAxisNames[a]) + "=" +
                                          std::to_string(q[a]) + " outside accuracy grid [" +
                                          std::to_string(ax.front()) + ", " + std::to_string(ax.back()) + "]");
      }
      if (ax.size() == 1) continue;
      const double v = std::clamp(q[a], ax.front(), ax.back());
      auto hi = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), v) - ax.begin());
      hi = std::clamp<std::size_t>(hi, 1, ax.size() - 1);
      lo[a] = hi - 1;
      t[a] = (v - ax[lo[a]]) / (ax[hi] - ax[lo[a]]);
    }
    double acc = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << kAxes); ++corner) {
      double w = 1.0;
      std::size_t idx = 0;
      for (std::size_t a = 0; a < kAxes; ++a) {
        const bool up = (corner >> a) & 1u;
        if (axes_[a].size() <= 1) {
          if (up) {
            w = 0.0;
            break;
          }
          continue;
        }
        w *= up ? t[a] : 1.0 - t[a];
        idx += (lo[a] + (up ? 1 : 0)) * stride[a];
      }
      if (w != 0.0) acc += w * values_[idx];
    }
    return acc;
  }

private:
  double threshold_ = 0.0;
  std::array<std::vector<double>, kAxes> axes_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Plans

enum class InfeasibleReason { memory, accuracy, encoder_overhead, codec_shape };
inline constexpr std::array<InfeasibleReason, 4> kAllReasons = {InfeasibleReason::memory, InfeasibleReason::accuracy,
                                                               InfeasibleReason::encoder_overhead,
                                                               InfeasibleReason::codec_shape};

inline std::string_view to_string(InfeasibleReason r) {
  switch (r) {
  case InfeasibleReason::memory: return "memory";
  case InfeasibleReason::accuracy: return "accuracy";
  case InfeasibleReason::encoder_overhead: return "encoder_overhead";
  case InfeasibleReason::codec_shape: return "codec_shape";
  }
  return "unknown";
}

struct DeploymentPlan {
  std::size_t split = 0;
  double sparsity = 0.0;
  std::optional<CodecConfig> codec;
  std::uint64_t on_device_flops = 0;
  std::uint64_t server_flops = 0;
  std::uint64_t comm_bits = 0;
  double device_latency_s = 0.0;
  double comm_latency_s = 0.0;
  double server_latency_s = 0.0;
  double total_latency_s = 0.0;
  double predicted_accuracy = 0.0;
  std::uint64_t memory_bytes = 0;
  std::vector<InfeasibleReason> infeasible;

  bool feasible() const { return infeasible.empty(); }
  bool operator==(const DeploymentPlan&) const = default;
};

struct PlannerOptions {
  FeatureSizing sizing = FeatureSizing::raw;
  unsigned threads = 1;
};

namespace detail {

inline std::uint64_t scaled(std::uint64_t v, double f) {
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(v) * f));
}

struct DeviceSide {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
  std::uint64_t feature_bits = 0;
  std::uint64_t feature_elements = 0;
};

// Idealized channel pruning at ratio s: the first weighted layer loses
// output channels only (1-s), later weighted layers lose input and output
// channels (1-s)^2, weightless layers follow the channel count (1-s). The
// split layer keeps C - floor(s*C) channels.
inline DeviceSide idealized_device_side(const ModelProfile& p, std::size_t split, double s, FeatureSizing sizing) {
  DeviceSide d;
  bool seen_weighted = false;
  const double keep = 1.0 - s;
  for (std::size_t i = 0; i < split; ++i) {
    const auto& l = p.layers[i];
    double f = 1.0;
    if (has_weights(l.kind)) {
      f = seen_weighted ? keep * keep : keep;
      seen_weighted = true;
    } else if (seen_weighted) {
      f = keep;
    }
    d.flops = checked_add(d.flops, scaled(l.flops, f));
    d.params = checked_add(d.params, scaled(l.params, f));
  }
  d.feature_bits = feature_bits(p, split, sizing);
  d.feature_elements = feature_elements(p, split);
  if (split > 0 && split < p.layers.size() && s > 0.0) {
    const auto c = p.layers[split - 1].output_shape[0];
    const auto kept = c - masked_channel_count(c, s);
    d.feature_elements = d.feature_elements / c * kept;
    d.feature_bits = d.feature_bits * kept / c;
  }
  return d;
}

} // namespace detail

inline DeploymentPlan evaluate_plan(const ModelProfile& profile, const EnvironmentProfile& env, std::size_t split,
                                    double sparsity, const std::optional<CodecConfig>& codec,
                                    const AccuracyModel& accuracy, const PruneReport* prune_report = nullptr,
                                    const PlannerOptions& options = {}) {
  if (!is_valid_split(profile, split)) {
    throw RangeError("split " + std::to_string(split) + " is not a valid split of '" + profile.name + "'");
  }
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw RangeError("sparsity " + std::to_string(sparsity) + " not in [0, 1)");

  detail::DeviceSide dev;
  if (prune_report != nullptr) {
    const auto pruned = apply_to_profile(profile, *prune_report, split);
    dev = {on_device_flops(pruned, split), on_device_params(pruned, split),
           feature_bits(pruned, split, options.sizing), feature_elements(pruned, split)};
  } else {
    dev = detail::idealized_device_side(profile, split, sparsity, options.sizing);
  }

  DeploymentPlan plan;
  plan.split = split;
  plan.sparsity = sparsity;
  plan.codec = codec;
  plan.on_device_flops = dev.flops;
  plan.server_flops = total_flops(profile) - on_device_flops(profile, split);
  plan.comm_bits = dev.feature_bits;

  if (codec) {
    const bool interior = split > 0 && split < profile.layers.size();
    if (!interior || codec->reduced_dim >= dev.feature_elements) {
      plan.infeasible.push_back(InfeasibleReason::codec_shape);
    } else {
      plan.comm_bits = coded_feature_bits(*codec, codec->reduced_dim);
    }
    if (static_cast<double>(codec->encoder_flops_overhead) > kMaxEncoderOverhead * static_cast<double>(dev.flops)) {
      plan.infeasible.push_back(InfeasibleReason::encoder_overhead);
    }
    // The decoder mirrors the encoder on the server.
    plan.on_device_flops = checked_add(plan.on_device_flops, codec->encoder_flops_overhead);
    plan.server_flops = checked_add(plan.server_flops, codec->encoder_flops_overhead);
  }

  plan.memory_bytes = static_cast<std::uint64_t>(
      std::llround(static_cast<double>(dev.params) * kBytesPerParam * env.memory_overhead_factor));
  if (plan.memory_bytes > env.device_memory_bytes) plan.infeasible.push_back(InfeasibleReason::memory);

  plan.predicted_accuracy = accuracy.predict(split, sparsity, codec ? codec->reduced_dim : 0,
                                             codec ? codec->quant_bits : 0);
  if (plan.predicted_accuracy < accuracy.threshold()) plan.infeasible.push_back(InfeasibleReason::accuracy);
  std::sort(plan.infeasible.begin(), plan.infeasible.end());

  plan.device_latency_s = static_cast<double>(plan.on_device_flops) / env.device_flops_per_s;
  plan.server_latency_s = static_cast<double>(plan.server_flops) / env.server_flops_per_s;
  plan.comm_latency_s = transmit_latency(plan.comm_bits, env.channel);
  plan.total_latency_s = plan.device_latency_s + plan.comm_latency_s + plan.server_latency_s;
  return plan;
}

// Strict preference among feasible plans: lower latency, then fewer bits,
// then earlier split, then lower sparsity, then no codec before any codec,
// then the smaller codec.
inline bool preferred(const DeploymentPlan& a, const DeploymentPlan& b) {
  auto key = [](const DeploymentPlan& p) {
    return std::make_tuple(p.total_latency_s, p.comm_bits, p.split, p.sparsity, p.codec.has_value(),
                           p.codec.value_or(CodecConfig{}));
  };
  return key(a) < key(b);
}

// ---------------------------------------------------------------------------
// Search grid

struct GridConfig {
  std::size_t split = 0;
  double sparsity = 0.0;
  std::optional<CodecConfig> codec;
};

struct ConfigGrid {
  std::vector<std::size_t> splits;
  std::vector<double> sparsities{0.0};
  std::vector<std::optional<CodecConfig>> codecs{std::nullopt};

  std::size_t size() const { return splits.size() * sparsities.size() * codecs.size(); }
  bool empty() const { return size() == 0; }

  // Split-major, then sparsity, then codec.
  GridConfig at(std::size_t i) const {
    const std::size_t c = i % codecs.size();
    const std::size_t s = (i / codecs.size()) % sparsities.size();
    const std::size_t k = i / (codecs.size() * sparsities.size());
    return {splits.at(k), sparsities[s], codecs[c]};
  }
};

class NoFeasiblePlanError : public Error {
public:
  NoFeasiblePlanError(std::size_t evaluated, std::array<std::size_t, 4> counts)
      : Error(message(evaluated, counts)), evaluated_(evaluated), counts_(counts) {}

  std::size_t evaluated() const { return evaluated_; }
  std::size_t count(InfeasibleReason r) const { return counts_[static_cast<std::size_t>(r)]; }

private:
  static std::string message(std::size_t evaluated, const std::array<std::size_t, 4>& counts) {
    std::string m = "no feasible plan among " + std::to_string(evaluated) + " configurations (";
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (i) m += ", ";
      m += std::string(to_string(kAllReasons[i])) + "=" + std::to_string(counts[i]);
    }
    return m + ")";
  }
  std::size_t evaluated_;
  std::array<std::size_t, 4> counts_;
};

struct SearchResult {
  DeploymentPlan best;
  std::vector<DeploymentPlan> all; // grid order
};

// Evaluates every configuration; results land at their grid index, so the
// output is the same for any thread count.
inline std::vector<DeploymentPlan> evaluate_grid(const ModelProfile& profile, const EnvironmentProfile& env,
                                                 const ConfigGrid& grid, const AccuracyModel& accuracy,
                                                 const PlannerOptions& options = {},
                                                 const PruneReport* prune_report = nullptr) {
  std::vector<std::optional<DeploymentPlan>> slots(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        const auto cfg = grid.at(i);
        slots[i] = evaluate_plan(profile, env, cfg.split, cfg.sparsity, cfg.codec, accuracy, prune_report, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(grid.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<DeploymentPlan> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline SearchResult search(const ModelProfile& profile, const EnvironmentProfile& env, const ConfigGrid& grid,
                           const AccuracyModel& accuracy, const PlannerOptions& options = {},
                           const PruneReport* prune_report = nullptr) {
  if (grid.empty()) throw ValidationError("search: empty configuration grid");
  SearchResult r;
  r.all = evaluate_grid(profile, env, grid, accuracy, options, prune_report);
  const DeploymentPlan* best = nullptr;
  std::array<std::size_t, 4> counts{};
  for (const auto& p : r.all) {
    for (auto reason : p.infeasible) ++counts[static_cast<std::size_t>(reason)];
    if (p.feasible() && (best == nullptr || preferred(p, *best))) best = &p;
  }
  if (best == nullptr) throw NoFeasiblePlanError(r.all.size(), counts);
  r.best = *best;
  return r;
}

// ---------------------------------------------------------------------------
// Pareto frontier

struct TradeoffPoint {
  std::uint64_t on_device_flops = 0;
  std::uint64_t comm_bits = 0;
  std::size_t plan_index = 0;

  bool operator==(const TradeoffPoint&) const = default;
};

inline bool dominates(const TradeoffPoint& a, const TradeoffPoint& b) {
  return a.on_device_flops <= b.on_device_flops && a.comm_bits <= b.comm_bits &&
         (a.on_device_flops < b.on_device_flops || a.comm_bits < b.comm_bits);
}

// Non-dominated points (minimizing both coordinates), by flops ascending.
// Identical points do not dominate each other and are all kept.
inline std::vector<TradeoffPoint> pareto_frontier(std::vector<TradeoffPoint> points) {
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return std::tie(a.on_device_flops, a.comm_bits, a.plan_index) <
           std::tie(b.on_device_flops, b.comm_bits, b.plan_index);
  });
  std::vector<TradeoffPoint> out;
  bool have_best = false;
  std::uint64_t best_bits = 0; // min comm_bits among strictly smaller flops
  for (std::size_t i = 0; i < points.size();) {
    std::size_t j = i;
    while (j < points.size() && points[j].on_device_flops == points[i].on_device_flops) ++j;
    const auto group_min = points[i].comm_bits;
    if (!have_best || group_min < best_bits) {
      for (std::size_t k = i; k < j && points[k].comm_bits == group_min; ++k) out.push_back(points[k]);
      best_bits = group_min;
      have_best = true;
    }
    i = j;
  }
  return out;
}

inline std::vector<TradeoffPoint> tradeoff_points(const std::vector<DeploymentPlan>& plans, bool feasible_only) {
  std::vector<TradeoffPoint> pts;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (!feasible_only || plans[i].feasible()) pts.push_back({plans[i].on_device_flops, plans[i].comm_bits, i});
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Rate sweep

struct SweepRow {
  double rate_bps = 0.0;
  DeploymentPlan best;
};

inline std::vector<SweepRow> rate_sweep(const ModelProfile& profile, const EnvironmentProfile& env_template,
                                        const std::vector<double>& rates, const ConfigGrid& grid,
                                        const AccuracyModel& accuracy, const PlannerOptions& options = {}) {
  std::vector<SweepRow> rows;
  for (double rate : rates) {
    if (!(rate > 0.0)) throw RangeError("rate_sweep: rates must be positive");
    auto env = env_template;
    env.channel = ChannelSpec::fixed(rate);
    rows.push_back({rate, search(profile, env, grid, accuracy, options).best});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Lookup table

struct LookupTable {
  std::vector<double> rate_buckets;    // bits/s, ascending
  std::vector<double> compute_buckets; // device FLOP/s, ascending
  EnvironmentProfile env_template;
  std::vector<std::optional<DeploymentPlan>> entries; // rate-major

  const std::optional<DeploymentPlan>& entry(std::size_t rate_idx, std::size_t compute_idx) const {
    return entries.at(rate_idx * compute_buckets.size() + compute_idx);
  }
  bool operator==(const LookupTable&) const = default;
};

inline LookupTable build_lookup(const ModelProfile& profile, const EnvironmentProfile& env_template,
                                std::vector<double> rate_buckets, std::vector<double> compute_buckets,
                                const ConfigGrid& grid, const AccuracyModel& accuracy,
                                const PlannerOptions& options = {}) {
  auto check_axis = [](const std::vector<double>& v, const char* what) {
    if (v.empty()) throw ValidationError(std::string("lookup: no ") + what + " buckets");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 0.0) || (i > 0 && !(v[i] > v[i - 1]))) {
        throw ValidationError(std::string("lookup: ") + what + " buckets must be positive and strictly increasing");
      }
    }
  };
  check_axis(rate_buckets, "rate");
  check_axis(compute_buckets, "compute");
  LookupTable t{std::move(rate_buckets), std::move(compute_buckets), env_template, {}};
  for (double rate : t.rate_buckets) {
    for (double compute : t.compute_buckets) {
      auto env = env_template;
      env.channel = ChannelSpec::fixed(rate);
      env.device_flops_per_s = compute;
      auto& slot = t.entries.emplace_back();
      try {
        slot.emplace(search(profile, env, grid, accuracy, options).best);
      } catch (const NoFeasiblePlanError&) {
        // entry stays empty
      }
    }
  }
  return t;
}

// Conservative lookup: the largest stored rate and compute buckets that do
// not exceed the query.
inline const DeploymentPlan& query_lookup(const LookupTable& t, double rate_bps, double device_flops_per_s) {
  auto bucket = [](const std::vector<double>& axis, double q, const char* what) {
    const auto it = std::upper_bound(axis.begin(), axis.end(), q);
    if (it == axis.begin()) {
      throw RangeError(std::string("lookup: ") + what + " " + std::to_string(q) + " below smallest bucket " +
                       std::to_string(axis.front()));
    }
    return static_cast<std::size_t>(it - axis.begin()) - 1;
  };
  const auto r = bucket(t.rate_buckets, rate_bps, "rate");
  const auto c = bucket(t.compute_buckets, device_flops_per_s, "device compute");
  const auto& e = t.entry(r, c);
  if (!e) {
    throw Error("lookup: no feasible plan stored for rate bucket " + std::to_string(t.rate_buckets[r]) +
                ", compute bucket " + std::to_string(t.compute_buckets[c]));
  }
  return *e;
}

inline const DeploymentPlan& query_lookup(const LookupTable& t, const EnvironmentProfile& env) {
  return query_lookup(t, effective_rate(env.channel), env.device_flops_per_s);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json environment_to_json(const EnvironmentProfile& e) {
  nlohmann::ordered_json j;
  j["device_flops_per_s"] = e.device_flops_per_s;
  j["server_flops_per_s"] = e.server_flops_per_s;
  j["device_memory_bytes"] = e.device_memory_bytes;
  j["memory_overhead_factor"] = e.memory_overhead_factor;
  j["channel"] = channel_to_json(e.channel);
  return j;
}

inline EnvironmentProfile environment_from_json(const nlohmann::json& j) {
  EnvironmentProfile e;
  e.device_flops_per_s = j.at("device_flops_per_s").get<double>();
  e.server_flops_per_s = j.at("server_flops_per_s").get<double>();
  e.device_memory_bytes = j.at("device_memory_bytes").get<std::uint64_t>();
  e.memory_overhead_factor = j.value("memory_overhead_factor", 1.0);
  e.channel = channel_from_json(j.at("channel"));
  e.validate();
  return e;
}

inline nlohmann::ordered_json accuracy_to_json(const AccuracyModel& m) {
  nlohmann::ordered_json j;
  j["threshold"] = m.threshold();
  nlohmann::ordered_json axes = nlohmann::ordered_json::object();
  for (std::size_t a = 0; a < AccuracyModel::kAxes; ++a) {
    if (!m.axes()[a].empty()) axes[std::string(AccuracyModel::kAxisNames[a])] = m.axes()[a];
  }
  j["axes"] = axes;
  j["values"] = m.values();
  return j;
}

inline AccuracyModel accuracy_from_json(const nlohmann::json& j) {
  std::array<std::vector<double>, AccuracyModel::kAxes> axes;
  if (j.contains("axes")) {
    for (const auto& [key, val] : j.at("axes").items()) {
      const auto it = std::find(AccuracyModel::kAxisNames.begin(), AccuracyModel::kAxisNames.end(), key);
      if (it == AccuracyModel::kAxisNames.end()) throw ValidationError("accuracy: unknown axis '" + key + "'");
      axes[static_cast<std::size_t>(it - AccuracyModel::kAxisNames.begin())] = val.get<std::vector<double>>();
    }
  }
  return AccuracyModel(j.at("threshold").get<double>(), std::move(axes), j.at("values").get<std::vector<double>>());
}

inline ConfigGrid grid_from_json(const nlohmann::json& j, const ModelProfile& profile) {
  ConfigGrid g;
  const auto& splits = j.at("splits");
  if (splits.is_string()) {
    if (splits.get<std::string>() != "all") throw ValidationError("grid: 'splits' must be an array or \"all\"");
    g.splits = valid_splits(profile);
  } else {
    g.splits = splits.get<std::vector<std::size_t>>();
  }
  if (j.contains("sparsities")) g.sparsities = j.at("sparsities").get<std::vector<double>>();
  if (j.contains("codecs")) {
    g.codecs.clear();
    for (const auto& c : j.at("codecs")) {
      if (c.is_null()) {
        g.codecs.emplace_back(std::nullopt);
      } else {
        g.codecs.emplace_back(codec_from_json(c));
      }
    }
  }
  if (g.empty()) throw ValidationError("grid: no configurations");
  return g;
}

inline nlohmann::ordered_json grid_to_json(const ConfigGrid& g) {
  nlohmann::ordered_json j;
  j["splits"] = g.splits;
  j["sparsities"] = g.sparsities;
  auto codecs = nlohmann::ordered_json::array();
  for (const auto& c : g.codecs) codecs.push_back(c ? codec_to_json(*c) : nlohmann::ordered_json(nullptr));
  j["codecs"] = codecs;
  return j;
}

inline nlohmann::ordered_json plan_to_json(const DeploymentPlan& p) {
  nlohmann::ordered_json j;
  j["split"] = p.split;
  j["sparsity"] = p.sparsity;
  j["codec"] = p.codec ? codec_to_json(*p.codec) : nlohmann::ordered_json(nullptr);
  j["on_device_flops"] = p.on_device_flops;
  j["server_flops"] = p.server_flops;
  j["comm_bits"] = p.comm_bits;
  j["device_latency_s"] = p.device_latency_s;
  j["comm_latency_s"] = p.comm_latency_s;
  j["server_latency_s"] = p.server_latency_s;
  j["total_latency_s"] = p.total_latency_s;
  j["predicted_accuracy"] = p.predicted_accuracy;
  j["memory_bytes"] = p.memory_bytes;
  j["feasible"] = p.feasible();
  auto reasons = nlohmann::ordered_json::array();
  for (auto r : p.infeasible) reasons.push_back(to_string(r));
  j["infeasible"] = reasons;
  return j;
}

inline DeploymentPlan plan_from_json(const nlohmann::json& j) {
  DeploymentPlan p;
  p.split = j.at("split").get<std::size_t>();
  p.sparsity = j.at("sparsity").get<double>();
  if (!j.at("codec").is_null()) p.codec = codec_from_json(j.at("codec"));
  p.on_device_flops = j.at("on_device_flops").get<std::uint64_t>();
  p.server_flops = j.at("server_flops").get<std::uint64_t>();
  p.comm_bits = j.at("comm_bits").get<std::uint64_t>();
  p.device_latency_s = j.at("device_latency_s").get<double>();
  p.comm_latency_s = j.at("comm_latency_s").get<double>();
  p.server_latency_s = j.at("server_latency_s").get<double>();
  p.total_latency_s = j.at("total_latency_s").get<double>();
  p.predicted_accuracy = j.at("predicted_accuracy").get<double>();
  p.memory_bytes = j.at("memory_bytes").get<std::uint64_t>();
  for (const auto& r : j.at("infeasible")) {
    const auto name = r.get<std::string>();
    bool found = false;
    for (auto reason : kAllReasons) {
      if (to_string(reason) == name) {
        p.infeasible.push_back(reason);
        found = true;
      }
    }
    if (!found) throw ParseError("plan: unknown infeasibility reason '" + name + "'");
  }
  return p;
}

inline nlohmann::ordered_json lookup_to_json(const LookupTable& t) {
  nlohmann::ordered_json j;
  j["rate_buckets"] = t.rate_buckets;
  j["compute_buckets"] = t.compute_buckets;
  j["environment"] = environment_to_json(t.env_template);
  auto entries = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < t.rate_buckets.size(); ++r) {
    for (std::size_t c = 0; c < t.compute_buckets.size(); ++c) {
      nlohmann::ordered_json e;
      e["rate_bps"] = t.rate_buckets[r];
      e["device_flops_per_s"] = t.compute_buckets[c];
      const auto& plan = t.entry(r, c);
      e["plan"] = plan ? plan_to_json(*plan) : nlohmann::ordered_json(nullptr);
      entries.push_back(std::move(e));
    }
  }
  j["entries"] = entries;
  return j;
}

inline LookupTable lookup_from_json(const nlohmann::json& j) {
  LookupTable t;
  t.rate_buckets = j.at("rate_buckets").get<std::vector<double>>();
  t.compute_buckets = j.at("compute_buckets").get<std::vector<double>>();
  t.env_template = environment_from_json(j.at("environment"));
  const auto& entries = j.at("entries");
  if (entries.size() != t.rate_buckets.size() * t.compute_buckets.size()) {
    throw ValidationError("lookup: entry count does not match bucket grid");
  }
  for (const auto& e : entries) {
    if (e.at("plan").is_null()) {
      t.entries.emplace_back(std::nullopt);
    } else {
      auto plan = plan_from_json(e.at("plan"));
      if (!plan.feasible()) throw ValidationError("lookup: stored plan is not feasible");
      t.entries.emplace_back(std::move(plan));
    }
  }
  return t;
}

} // namespace coinfer
