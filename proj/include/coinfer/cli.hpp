#pragma once

// Command-line front end. Every subcommand computes all of its outputs in
// memory first and only then commits them with temp-file renames, so a
// failing run leaves nothing behind. Exit status: 0 success, 1 domain error,
// 2 usage error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "coinfer/channel.hpp"
#include "coinfer/error.hpp"
#include "coinfer/feature_codec.hpp"
#include "coinfer/model_profile.hpp"
#include "coinfer/planner.hpp"
#include "coinfer/pruning.hpp"
#include "coinfer/random.hpp"
#include "coinfer/report_io.hpp"
#include "coinfer/tensor_io.hpp"

namespace coinfer::cli {

inline constexpr const char* kConfigDirEnv = "COINFER_CONFIG_DIR";
inline constexpr const char* kDefaultProfile = "resnet18_cifar10.json";
inline constexpr const char* kDefaultEnvironment = "raspberry_pi3_edge.json";
inline constexpr const char* kDefaultAccuracy = "resnet18_cifar10_accuracy.json";
inline constexpr const char* kDefaultGrid = "resnet18_cifar10_grid.json";

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Files to be written once the command has fully succeeded.
class PendingOutputs {
public:
  void add(std::string path, std::string content) {
    if (!path.empty()) files_.emplace_back(std::move(path), std::move(content));
  }
  void commit() const {
    for (const auto& [path, content] : files_) write_file_atomic(path, content);
  }

private:
  std::vector<std::pair<std::string, std::string>> files_;
};

struct Context {
  Context(std::ostream& o, std::ostream& e) : out(o), err(e) {}

  std::ostream& out;
  std::ostream& err;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool self_check = false;
  PendingOutputs outputs;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();

  // Resolves an input path: an explicit flag wins; relative paths that do
  // not exist and omitted flags fall back to $COINFER_CONFIG_DIR.
  std::filesystem::path resolve(const std::string& flag, const char* default_name, const char* what) const {
    const char* dir = std::getenv(kConfigDirEnv);
    if (flag.empty()) {
      if (dir == nullptr) {
        throw UsageError(std::string("--") + what + " is required (or set " + kConfigDirEnv + ")");
      }
      return std::filesystem::path(dir) / default_name;
    }
    std::filesystem::path p(flag);
    if (p.is_relative() && !std::filesystem::exists(p) && dir != nullptr &&
        std::filesystem::exists(std::filesystem::path(dir) / p)) {
      return std::filesystem::path(dir) / p;
    }
    return p;
  }

  // Reads an input file and records its digest for the output metadata.
  std::string read_input(const std::string& key, const std::filesystem::path& path) {
    auto text = read_text_file(path);
    inputs[key] = fnv1a64_hex(text);
    return text;
  }

  nlohmann::ordered_json meta(const std::string& command, nlohmann::ordered_json params = nullptr) const {
    nlohmann::ordered_json m;
    m["tool"] = "coinfer";
    m["version"] = std::string(kToolVersion);
    m["command"] = command;
    m["seed"] = seed;
    m["inputs"] = inputs;
    if (!params.is_null()) m["params"] = std::move(params);
    return m;
  }
};

inline FeatureSizing parse_sizing(const std::string& s) {
  if (s == "raw") return FeatureSizing::raw;
  if (s == "entropy_coded") return FeatureSizing::entropy_coded;
  throw UsageError("--sizing must be 'raw' or 'entropy_coded'");
}

inline std::vector<double> parse_values_flag(const std::string& flag, const std::string& value) {
  try {
    if (std::count(value.begin(), value.end(), ':') == 3) return parse_range(value);
    return parse_number_list(value);
  } catch (const RangeError& e) {
    throw UsageError("--" + flag + ": " + e.what());
  }
}

inline std::string fmt(double v) { return format_double(v); }
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }

// ---------------------------------------------------------------------------
// Self checks on emitted CSVs

inline void check_non_increasing(const CsvTable& t, const std::string& col, const std::string& what) {
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    if (t.number(r, col) > t.number(r - 1, col)) {
      throw Error("self-check failed: " + what + " column '" + col + "' increases at row " + std::to_string(r));
    }
  }
}

inline void check_non_decreasing(const CsvTable& t, const std::string& col, const std::string& what) {
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    if (t.number(r, col) < t.number(r - 1, col)) {
      throw Error("self-check failed: " + what + " column '" + col + "' decreases at row " + std::to_string(r));
    }
  }
}

inline void check_additive(const CsvTable& t) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double sum = t.number(r, "device_latency_s") + t.number(r, "comm_latency_s") +
                       t.number(r, "server_latency_s");
    const double total = t.number(r, "total_latency_s");
    if (std::abs(sum - total) > 1e-12 * std::max(1.0, std::abs(total))) {
      throw Error("self-check failed: latency terms do not add up at row " + std::to_string(r));
    }
  }
}

// ---------------------------------------------------------------------------
// Subcommands

struct InspectArgs {
  std::string profile, csv, sizing = "raw";
};

inline int cmd_inspect(Context& ctx, const InspectArgs& a) {
  const auto path = ctx.resolve(a.profile, kDefaultProfile, "profile");
  const auto profile = parse_profile(ctx.read_input("profile", path), path.string());
  const auto sizing = parse_sizing(a.sizing);
  const double input_bits = static_cast<double>(feature_bits(profile, 0, sizing));

  CsvWriter csv(ctx.meta("inspect", {{"sizing", a.sizing}}),
                {"split", "layer", "on_device_flops", "feature_bits", "amplification_ratio"});
  ctx.out << "profile " << profile.name << ": " << profile.size() << " layers, " << total_flops(profile)
          << " FLOPs, " << total_params(profile) << " params\n";
  ctx.out << std::left << std::setw(7) << "split" << std::setw(26) << "layer" << std::right << std::setw(16)
          << "on_device_flops" << std::setw(14) << "feature_bits" << std::setw(12) << "ratio" << "\n";
  for (auto k : valid_splits(profile)) {
    const std::string layer = k == 0 ? "(input)" : profile.layers[k - 1].name;
    const auto flops = on_device_flops(profile, k);
    const auto bits = feature_bits(profile, k, sizing);
    const double ratio = static_cast<double>(bits) / input_bits;
    ctx.out << std::left << std::setw(7) << k << std::setw(26) << layer << std::right << std::setw(16) << flops
            << std::setw(14) << bits << std::setw(12) << std::setprecision(4) << ratio << "\n";
    csv.write_row({std::to_string(k), layer, fmt(flops), fmt(bits), fmt(ratio)});
  }
  const auto amp = amplification_points(profile, sizing);
  ctx.out << amp.size() << " split points amplify the input";
  if (!amp.empty()) ctx.out << " (max ratio " << std::setprecision(4) << amp.front().ratio << " at split " << amp.front().split << ")";
  ctx.out << "\n";

  if (!a.csv.empty()) {
    const auto text = csv.str();
    if (ctx.self_check) {
      const auto t = parse_csv(text);
      if (t.rows.size() != valid_splits(profile).size()) throw Error("self-check failed: inspect row count");
      check_non_decreasing(t, "on_device_flops", "inspect");
    }
    ctx.outputs.add(a.csv, text);
  }
  return 0;
}

struct PruneArgs {
  std::string profile, weights, schedule, ramp, hook = "identity", out, profile_out;
  std::size_t split = 0;
  double sigma = 0.01;
};

inline int cmd_prune(Context& ctx, const PruneArgs& a) {
  const auto path = ctx.resolve(a.profile, kDefaultProfile, "profile");
  const auto profile = parse_profile(ctx.read_input("profile", path), path.string());
  check_split(profile, a.split);
  if (a.split == 0) throw UsageError("--split must be >= 1 (nothing runs on the device at split 0)");

  SparsitySchedule schedule;
  if (!a.schedule.empty() == !a.ramp.empty()) throw UsageError("give exactly one of --schedule or --ramp");
  if (!a.schedule.empty()) {
    schedule = SparsitySchedule(parse_values_flag("schedule", a.schedule));
  } else {
    const auto r = parse_values_flag("ramp", a.ramp);
    if (r.size() != 2 || r[1] < 1 || r[1] != std::floor(r[1])) throw UsageError("--ramp expects final,steps");
    schedule = SparsitySchedule::linear_ramp(r[0], static_cast<std::size_t>(r[1]));
  }

  UpdateHook hook;
  if (a.hook == "identity") {
    hook = identity_hook();
  } else if (a.hook == "gaussian") {
    hook = gaussian_perturbation_hook(ctx.seed, a.sigma);
  } else {
    throw UsageError("--hook must be 'identity' or 'gaussian'");
  }

  ctx.read_input("weights", a.weights);
  auto tensors = read_tensors(a.weights);
  const auto& split_layer = profile.layers[a.split - 1];
  SplitOutput split_out{shape_elements(split_layer.output_shape) / split_layer.output_shape[0],
                        split_layer.bits_per_element};
  const auto report = run_schedule(tensors, schedule, hook, split_out);
  const auto pruned = apply_to_profile(profile, report, a.split);

  auto j = nlohmann::ordered_json::object();
  j["meta"] = ctx.meta("prune", {{"split", a.split}, {"hook", a.hook}, {"sigma", a.sigma}});
  j["report"] = report_to_json(report);
  j["split"] = a.split;
  j["on_device_flops_before"] = on_device_flops(profile, a.split);
  j["on_device_flops_after"] = on_device_flops(pruned, a.split);
  j["feature_bits_before"] = feature_bits(profile, a.split);
  j["feature_bits_after"] = feature_bits(pruned, a.split);
  ctx.outputs.add(a.out, j.dump(2) + "\n");
  ctx.outputs.add(a.profile_out, dump_profile(pruned));

  ctx.out << "pruned " << report.layers.size() << " layers over " << schedule.size() << " iterations; on-device FLOPs "
          << on_device_flops(profile, a.split) << " -> " << on_device_flops(pruned, a.split) << ", feature bits "
          << feature_bits(profile, a.split) << " -> " << feature_bits(pruned, a.split) << "\n";
  if (a.out.empty()) ctx.out << j.dump(2) << "\n";
  return 0;
}

inline Matrix tensor_as_matrix(const WeightTensor& t) {
  Matrix m(t.dims[0], t.values.size() / t.dims[0]);
  for (std::size_t i = 0; i < t.values.size(); ++i) m.data[i] = t.values[i];
  return m;
}

inline const WeightTensor& pick_tensor(const std::vector<WeightTensor>& ts, const std::string& name) {
  if (ts.empty()) throw ValidationError("sample container holds no tensors");
  if (name.empty()) return ts.front();
  for (const auto& t : ts) {
    if (t.layer_name == name) return t;
  }
  throw ValidationError("sample container has no tensor '" + name + "'");
}

struct CodecFitArgs {
  std::string samples, tensor, reducer_out, codebook_out;
  std::size_t reduced_dim = 0;
  std::uint32_t bits = 4;
  std::size_t max_iters = 200;
  double tol = 1e-12;
};

inline int cmd_codec_fit(Context& ctx, const CodecFitArgs& a) {
  ctx.read_input("samples", a.samples);
  const auto tensors = read_tensors(a.samples);
  const auto x = tensor_as_matrix(pick_tensor(tensors, a.tensor));
  const std::size_t out_dim = a.reduced_dim == 0 ? x.cols : a.reduced_dim;
  PowerIterationOptions opt;
  opt.seed = ctx.seed;
  const auto reducer = fit_reducer(x, out_dim, opt);

  std::vector<double> coeffs;
  coeffs.reserve(x.rows * out_dim);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto y = reduce(reducer, x.row(r));
    coeffs.insert(coeffs.end(), y.begin(), y.end());
  }
  const auto fit = fit_codebook(coeffs, a.bits, a.max_iters, a.tol);

  auto rj = reducer_to_json(reducer);
  rj["meta"] = ctx.meta("codec-fit");
  auto cj = codebook_to_json(fit.codebook);
  cj["meta"] = ctx.meta("codec-fit");
  ctx.outputs.add(a.reducer_out, rj.dump(2) + "\n");
  ctx.outputs.add(a.codebook_out, cj.dump(2) + "\n");

  const double captured = std::accumulate(reducer.explained_variance.begin(), reducer.explained_variance.end(), 0.0);
  ctx.out << "reducer: " << reducer.in_dim << " -> " << reducer.out_dim << " dims, captured variance "
          << fmt(captured / reducer.total_variance) << ", reconstruction mse " << fmt(reconstruction_mse(reducer, x))
          << "\n";
  ctx.out << "codebook: " << fit.codebook.size() << " levels after " << fit.iterations()
          << " Lloyd iterations, distortion " << fmt(fit.distortion()) << (fit.degenerate ? " (degenerate)" : "") << "\n";
  ctx.out << "payload: " << payload_bits(fit.codebook, out_dim) << " bits per sample (was "
          << x.cols * kDefaultFeatureBits << ")\n";
  return 0;
}

struct ChannelArgs {
  std::string kind = "awgn", snr_range, p_range, csv;
  double bandwidth = 1e6, snr_db = 0.0, p = 0.0, symbol_rate = 1e6, rate = 0.0;
  std::optional<std::uint64_t> bits;
};

inline ChannelSpec channel_from_args(const ChannelArgs& a) {
  if (a.kind == "awgn") return ChannelSpec::awgn(a.bandwidth, a.snr_db);
  if (a.kind == "bsc") return ChannelSpec::bsc(a.p, a.symbol_rate);
  if (a.kind == "fixed_rate") return ChannelSpec::fixed(a.rate);
  throw UsageError("--kind must be awgn, bsc or fixed_rate");
}

inline std::string latency_cell(std::optional<std::uint64_t> bits, const ChannelSpec& spec) {
  if (!bits) return "";
  if (*bits > 0 && !(effective_rate(spec) > 0.0)) return "unreachable";
  return fmt(transmit_latency(*bits, spec));
}

inline int cmd_channel(Context& ctx, const ChannelArgs& a) {
  ChannelSpec spec;
  try {
    spec = channel_from_args(a);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  const double rate = effective_rate(spec);
  if (spec.kind == ChannelKind::bsc) {
    ctx.out << "capacity: " << fmt(bsc_capacity(spec.flip_prob)) << " bits/use, " << fmt(rate) << " bits/s\n";
  } else {
    ctx.out << "capacity: " << fmt(rate) << " bits/s\n";
  }
  if (a.bits) {
    if (*a.bits > 0 && !(rate > 0.0)) {
      ctx.out << "latency: unreachable\n";
    } else {
      ctx.out << "latency: " << fmt(transmit_latency(*a.bits, spec)) << " s for " << *a.bits << " bits\n";
    }
  }

  if (!a.snr_range.empty() || !a.p_range.empty()) {
    if (a.csv.empty()) throw UsageError("--csv is required with --snr-range/--p-range");
    const bool snr = !a.snr_range.empty();
    if (snr && spec.kind != ChannelKind::awgn) throw UsageError("--snr-range needs --kind awgn");
    if (!snr && spec.kind != ChannelKind::bsc) throw UsageError("--p-range needs --kind bsc");
    const auto values = parse_values_flag(snr ? "snr-range" : "p-range", snr ? a.snr_range : a.p_range);
    nlohmann::ordered_json params = channel_to_json(spec);
    params["bits"] = a.bits ? nlohmann::ordered_json(*a.bits) : nlohmann::ordered_json(nullptr);
    CsvWriter csv(ctx.meta("channel", params), {snr ? "snr_db" : "p", "capacity_bps", "latency_s"});
    for (double v : values) {
      ChannelSpec s = snr ? ChannelSpec::awgn(spec.bandwidth_hz, v) : ChannelSpec::bsc(v, spec.symbol_rate);
      csv.write_row({fmt(v), fmt(effective_rate(s)), latency_cell(a.bits, s)});
    }
    const auto text = csv.str();
    if (ctx.self_check) {
      const auto t = parse_csv(text);
      if (snr) {
        check_non_decreasing(t, "capacity_bps", "channel");
      } else {
        check_non_increasing(t, "capacity_bps", "channel");
      }
    }
    ctx.outputs.add(a.csv, text);
  }
  return 0;
}

struct PlanInputs {
  std::string profile, env, accuracy, grid, sizing = "raw";
};

struct LoadedPlanInputs {
  ModelProfile profile;
  EnvironmentProfile env;
  AccuracyModel accuracy;
  ConfigGrid grid;
  PlannerOptions options;
};

inline LoadedPlanInputs load_plan_inputs(Context& ctx, const PlanInputs& a) {
  LoadedPlanInputs in;
  const auto pp = ctx.resolve(a.profile, kDefaultProfile, "profile");
  in.profile = parse_profile(ctx.read_input("profile", pp), pp.string());
  const auto ep = ctx.resolve(a.env, kDefaultEnvironment, "env");
  in.env = environment_from_json(parse_json_text(ctx.read_input("env", ep), ep.string()));
  const auto ap = ctx.resolve(a.accuracy, kDefaultAccuracy, "accuracy");
  in.accuracy = accuracy_from_json(parse_json_text(ctx.read_input("accuracy", ap), ap.string()));
  const auto gp = ctx.resolve(a.grid, kDefaultGrid, "grid");
  in.grid = grid_from_json(parse_json_text(ctx.read_input("grid", gp), gp.string()), in.profile);
  in.options.sizing = parse_sizing(a.sizing);
  in.options.threads = ctx.threads;
  return in;
}

inline std::vector<std::string> plan_csv_header() {
  return {"split", "sparsity", "reduced_dim", "quant_bits", "on_device_flops", "server_flops", "comm_bits",
          "device_latency_s", "comm_latency_s", "server_latency_s", "total_latency_s", "predicted_accuracy",
          "memory_bytes", "feasible"};
}

inline std::vector<std::string> plan_csv_row(const DeploymentPlan& p) {
  return {std::to_string(p.split), fmt(p.sparsity), p.codec ? fmt(p.codec->reduced_dim) : "0",
          p.codec ? std::to_string(p.codec->quant_bits) : "0", fmt(p.on_device_flops), fmt(p.server_flops),
          fmt(p.comm_bits), fmt(p.device_latency_s), fmt(p.comm_latency_s), fmt(p.server_latency_s),
          fmt(p.total_latency_s), fmt(p.predicted_accuracy), fmt(p.memory_bytes), p.feasible() ? "1" : "0"};
}

struct PlanArgs {
  PlanInputs inputs;
  std::string out, plans_csv, prune_report;
};

inline int cmd_plan(Context& ctx, const PlanArgs& a) {
  auto in = load_plan_inputs(ctx, a.inputs);
  std::optional<PruneReport> report;
  if (!a.prune_report.empty()) {
    const auto text = ctx.read_input("prune_report", a.prune_report);
    auto j = parse_json_text(text, a.prune_report);
    report = report_from_json(j.contains("report") ? j.at("report") : j);
  }
  const auto result = search(in.profile, in.env, in.grid, in.accuracy, in.options, report ? &*report : nullptr);
  const auto frontier = pareto_frontier(tradeoff_points(result.all, true));

  std::array<std::size_t, 4> counts{};
  std::size_t feasible = 0;
  for (const auto& p : result.all) {
    feasible += p.feasible();
    for (auto r : p.infeasible) ++counts[static_cast<std::size_t>(r)];
  }
  nlohmann::ordered_json j;
  j["meta"] = ctx.meta("plan", {{"sizing", a.inputs.sizing}, {"grid", grid_to_json(in.grid)}});
  j["environment"] = environment_to_json(in.env);
  j["best"] = plan_to_json(result.best);
  j["evaluated"] = result.all.size();
  j["feasible"] = feasible;
  nlohmann::ordered_json cj;
  for (auto r : kAllReasons) cj[std::string(to_string(r))] = counts[static_cast<std::size_t>(r)];
  j["infeasible_counts"] = cj;
  auto fj = nlohmann::ordered_json::array();
  for (const auto& pt : frontier) fj.push_back(plan_to_json(result.all[pt.plan_index]));
  j["frontier"] = fj;
  const auto text = j.dump(2) + "\n";
  if (a.out.empty()) {
    ctx.out << text;
  } else {
    ctx.outputs.add(a.out, text);
    const auto& b = result.best;
    ctx.out << "best plan: split " << b.split << ", sparsity " << fmt(b.sparsity) << ", codec "
            << (b.codec ? std::to_string(b.codec->reduced_dim) + "x" + std::to_string(b.codec->quant_bits) + "b"
                        : std::string("none"))
            << ", total latency " << fmt(b.total_latency_s) << " s (" << feasible << "/" << result.all.size()
            << " feasible, " << frontier.size() << " on frontier)\n";
  }
  if (!a.plans_csv.empty()) {
    CsvWriter csv(ctx.meta("plan"), plan_csv_header());
    for (const auto& p : result.all) csv.write_row(plan_csv_row(p));
    const auto csv_text = csv.str();
    if (ctx.self_check) check_additive(parse_csv(csv_text));
    ctx.outputs.add(a.plans_csv, csv_text);
  }
  return 0;
}

struct SweepArgs {
  PlanInputs inputs;
  std::string rates = "1000:10000000:log:25", out;
};

inline int cmd_sweep(Context& ctx, const SweepArgs& a) {
  auto in = load_plan_inputs(ctx, a.inputs);
  const auto rates = parse_values_flag("rates", a.rates);
  const auto rows = rate_sweep(in.profile, in.env, rates, in.grid, in.accuracy, in.options);

  std::vector<std::string> header = {"rate_bps"};
  for (auto& h : plan_csv_header()) header.push_back(h);
  CsvWriter csv(ctx.meta("sweep", {{"rates", a.rates}, {"sizing", a.inputs.sizing}, {"grid", grid_to_json(in.grid)}}),
                header);
  for (const auto& r : rows) {
    std::vector<std::string> cells = {fmt(r.rate_bps)};
    for (auto& c : plan_csv_row(r.best)) cells.push_back(c);
    csv.write_row(cells);
  }
  const auto text = csv.str();
  if (ctx.self_check) {
    const auto t = parse_csv(text);
    if (t.rows.size() != rates.size()) throw Error("self-check failed: sweep row count");
    check_non_decreasing(t, "rate_bps", "sweep");
    check_non_increasing(t, "total_latency_s", "sweep");
    check_additive(t);
  }
  if (a.out.empty()) {
    ctx.out << text;
  } else {
    ctx.outputs.add(a.out, text);
    ctx.out << "sweep: " << rows.size() << " rates, latency " << fmt(rows.front().best.total_latency_s) << " s at "
            << fmt(rows.front().rate_bps) << " bps -> " << fmt(rows.back().best.total_latency_s) << " s at "
            << fmt(rows.back().rate_bps) << " bps\n";
  }
  return 0;
}

struct JsccArgs {
  std::string codebook, samples, tensor, p_values = "0:0.2:lin:9", out;
  std::size_t gaussian = 0;
  double symbol_rate = 1e6;
};

inline int cmd_jscc_sweep(Context& ctx, const JsccArgs& a) {
  const auto cb = codebook_from_json(parse_json_text(ctx.read_input("codebook", a.codebook), a.codebook));
  std::vector<double> samples;
  if (!a.samples.empty() == (a.gaussian > 0)) throw UsageError("give exactly one of --samples or --gaussian");
  if (!a.samples.empty()) {
    ctx.read_input("samples", a.samples);
    const auto tensors = read_tensors(a.samples);
    const auto& t = pick_tensor(tensors, a.tensor);
    samples.assign(t.values.begin(), t.values.end());
  } else {
    samples.resize(a.gaussian);
    for (std::size_t i = 0; i < a.gaussian; ++i) samples[i] = counter_normal(derive_seed(ctx.seed, 1), i);
  }
  const auto ps = parse_values_flag("p-values", a.p_values);
  for (double p : ps) {
    if (!(p >= 0.0 && p <= 0.5)) throw UsageError("--p-values entries must be in [0, 0.5]");
  }
  const auto points = jscc_distortion_sweep(cb, samples, ps, ctx.seed);
  const auto payload = payload_bits(cb, samples.size());

  nlohmann::ordered_json params;
  params["samples"] = samples.size();
  params["symbol_rate"] = a.symbol_rate;
  params["payload_bits"] = payload;
  CsvWriter csv(ctx.meta("jscc-sweep", params), {"p", "capacity_bits_per_use", "latency_s", "distortion"});
  for (const auto& pt : points) {
    const auto spec = ChannelSpec::bsc(pt.p, a.symbol_rate);
    csv.write_row({fmt(pt.p), fmt(bsc_capacity(pt.p)), latency_cell(payload, spec), fmt(pt.mse)});
  }
  const auto text = csv.str();
  if (ctx.self_check) {
    const auto t = parse_csv(text);
    if (t.rows.size() != ps.size()) throw Error("self-check failed: jscc row count");
    if (!ps.empty() && ps.front() == 0.0 && t.number(0, "distortion") != quantization_mse(cb, samples)) {
      throw Error("self-check failed: distortion at p=0 differs from the noiseless quantizer");
    }
  }
  if (a.out.empty()) {
    ctx.out << text;
  } else {
    ctx.outputs.add(a.out, text);
    ctx.out << "jscc sweep: " << points.size() << " flip rates over " << samples.size() << " samples\n";
  }
  return 0;
}

struct LookupBuildArgs {
  PlanInputs inputs;
  std::string rate_buckets = "1000:10000000:log:9", compute_buckets, out;
};

inline int cmd_lookup_build(Context& ctx, const LookupBuildArgs& a) {
  auto in = load_plan_inputs(ctx, a.inputs);
  const auto rates = parse_values_flag("rate-buckets", a.rate_buckets);
  const auto computes = a.compute_buckets.empty() ? std::vector<double>{in.env.device_flops_per_s}
                                                  : parse_values_flag("compute-buckets", a.compute_buckets);
  const auto table = build_lookup(in.profile, in.env, rates, computes, in.grid, in.accuracy, in.options);
  auto j = nlohmann::ordered_json::object();
  j["meta"] = ctx.meta("lookup-build", {{"grid", grid_to_json(in.grid)}});
  j["table"] = lookup_to_json(table);
  const auto text = j.dump(2) + "\n";
  if (a.out.empty()) {
    ctx.out << text;
  } else {
    ctx.outputs.add(a.out, text);
    std::size_t stored = 0;
    for (const auto& e : table.entries) stored += e.has_value();
    ctx.out << "lookup table: " << stored << "/" << table.entries.size() << " buckets hold a feasible plan\n";
  }
  return 0;
}

struct LookupQueryArgs {
  std::string table;
  double rate = 0.0, device_flops = 0.0;
};

inline int cmd_lookup_query(Context& ctx, const LookupQueryArgs& a) {
  auto j = parse_json_text(ctx.read_input("table", a.table), a.table);
  const auto table = lookup_from_json(j.contains("table") ? j.at("table") : j);
  const double compute = a.device_flops > 0.0 ? a.device_flops : table.env_template.device_flops_per_s;
  const auto& plan = query_lookup(table, a.rate, compute);
  ctx.out << plan_to_json(plan).dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

inline void add_plan_inputs(CLI::App* sub, PlanInputs& in) {
  sub->add_option("--profile", in.profile, "Model profile JSON");
  sub->add_option("--env", in.env, "Environment JSON");
  sub->add_option("--accuracy", in.accuracy, "Accuracy table JSON");
  sub->add_option("--grid", in.grid, "Configuration grid JSON");
  sub->add_option("--sizing", in.sizing, "Feature size model: raw | entropy_coded");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"coinfer: device-edge co-inference planner"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool self_check = false;
  app.add_option("--seed", seed, "Random seed recorded in every output")->capture_default_str();
  app.add_option("--threads", threads, "Planner worker threads")->check(CLI::Range(1u, 256u))->capture_default_str();
  app.add_flag("--self-check", self_check, "Re-parse emitted CSVs and verify their invariants");
  app.fallthrough();

  InspectArgs inspect;
  auto* s_inspect = app.add_subcommand("inspect", "Per-split computation and communication table");
  s_inspect->add_option("--profile", inspect.profile, "Model profile JSON");
  s_inspect->add_option("--csv", inspect.csv, "Write the table as CSV");
  s_inspect->add_option("--sizing", inspect.sizing, "raw | entropy_coded");

  PruneArgs prune;
  auto* s_prune = app.add_subcommand("prune", "Incremental channel pruning of the on-device layers");
  s_prune->add_option("--profile", prune.profile, "Model profile JSON");
  s_prune->add_option("--weights", prune.weights, "Weight container sidecar JSON")->required();
  s_prune->add_option("--split", prune.split, "Split index")->required();
  s_prune->add_option("--schedule", prune.schedule, "Sparsity per iteration: list or start:stop:lin:count");
  s_prune->add_option("--ramp", prune.ramp, "Linear ramp: final,steps");
  s_prune->add_option("--hook", prune.hook, "Update hook: identity | gaussian");
  s_prune->add_option("--sigma", prune.sigma, "Std-dev of the gaussian hook");
  s_prune->add_option("--out", prune.out, "Prune report JSON");
  s_prune->add_option("--profile-out", prune.profile_out, "Pruned profile JSON");

  CodecFitArgs codec;
  auto* s_codec = app.add_subcommand("codec-fit", "Fit the linear reducer and scalar codebook to feature samples");
  s_codec->add_option("--samples", codec.samples, "Feature sample container sidecar (tensor dims [N, ...])")->required();
  s_codec->add_option("--tensor", codec.tensor, "Tensor name inside the container");
  s_codec->add_option("--reduced-dim", codec.reduced_dim, "Output dimension (default: input dimension)");
  s_codec->add_option("--bits", codec.bits, "Bits per quantized symbol")->check(CLI::Range(1u, 24u));
  s_codec->add_option("--max-iters", codec.max_iters, "Lloyd iteration cap");
  s_codec->add_option("--tol", codec.tol, "Lloyd stopping tolerance on MSE improvement");
  s_codec->add_option("--reducer-out", codec.reducer_out, "Reducer JSON");
  s_codec->add_option("--codebook-out", codec.codebook_out, "Codebook JSON");

  ChannelArgs channel;
  std::uint64_t channel_bits = 0;
  auto* s_channel = app.add_subcommand("channel", "Channel capacity, latency and parameter sweeps");
  s_channel->add_option("--kind", channel.kind, "awgn | bsc | fixed_rate");
  s_channel->add_option("--bandwidth", channel.bandwidth, "AWGN bandwidth in Hz");
  s_channel->add_option("--snr-db", channel.snr_db, "AWGN SNR in dB");
  s_channel->add_option("--p", channel.p, "BSC flip probability");
  s_channel->add_option("--symbol-rate", channel.symbol_rate, "BSC channel uses per second");
  s_channel->add_option("--rate", channel.rate, "Fixed rate in bits/s");
  auto* bits_opt = s_channel->add_option("--bits", channel_bits, "Payload size for latency");
  s_channel->add_option("--snr-range", channel.snr_range, "Sweep SNR: start:stop:{lin|log}:count or list");
  s_channel->add_option("--p-range", channel.p_range, "Sweep flip probability");
  s_channel->add_option("--csv", channel.csv, "Sweep CSV output");

  PlanArgs plan;
  auto* s_plan = app.add_subcommand("plan", "Brute-force search for the lowest-latency feasible plan");
  add_plan_inputs(s_plan, plan.inputs);
  s_plan->add_option("--out", plan.out, "Plan JSON (best plan, frontier, counts)");
  s_plan->add_option("--plans-csv", plan.plans_csv, "Every evaluated plan as CSV");
  s_plan->add_option("--prune-report", plan.prune_report, "Use a measured prune report instead of idealized scaling");

  SweepArgs sweep;
  auto* s_sweep = app.add_subcommand("sweep", "Best latency as a function of link rate");
  add_plan_inputs(s_sweep, sweep.inputs);
  s_sweep->add_option("--rates", sweep.rates, "Rates in bits/s: start:stop:{lin|log}:count or list");
  s_sweep->add_option("--out", sweep.out, "Sweep CSV");

  JsccArgs jscc;
  auto* s_jscc = app.add_subcommand("jscc-sweep", "Quantizer distortion over a BSC versus flip probability");
  s_jscc->add_option("--codebook", jscc.codebook, "Codebook JSON")->required();
  s_jscc->add_option("--samples", jscc.samples, "Sample container sidecar");
  s_jscc->add_option("--tensor", jscc.tensor, "Tensor name inside the container");
  s_jscc->add_option("--gaussian", jscc.gaussian, "Use N seeded standard normal samples instead");
  s_jscc->add_option("--p-values", jscc.p_values, "Flip probabilities: list or range");
  s_jscc->add_option("--symbol-rate", jscc.symbol_rate, "Channel uses per second for the latency column");
  s_jscc->add_option("--out", jscc.out, "Sweep CSV");

  LookupBuildArgs lbuild;
  auto* s_lbuild = app.add_subcommand("lookup-build", "Precompute best plans over rate and compute buckets");
  add_plan_inputs(s_lbuild, lbuild.inputs);
  s_lbuild->add_option("--rate-buckets", lbuild.rate_buckets, "Rate buckets in bits/s");
  s_lbuild->add_option("--compute-buckets", lbuild.compute_buckets, "Device FLOP/s buckets (default: env value)");
  s_lbuild->add_option("--out", lbuild.out, "Lookup table JSON");

  LookupQueryArgs lquery;
  auto* s_lquery = app.add_subcommand("lookup-query", "Fetch the stored plan for an environment");
  s_lquery->add_option("--table", lquery.table, "Lookup table JSON")->required();
  s_lquery->add_option("--rate", lquery.rate, "Link rate in bits/s")->required();
  s_lquery->add_option("--device-flops", lquery.device_flops, "Device FLOP/s (default: table environment)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  Context ctx(out, err);
  ctx.seed = seed;
  ctx.threads = threads;
  ctx.self_check = self_check;
  try {
    int rc = 0;
    if (*s_inspect) rc = cmd_inspect(ctx, inspect);
    if (*s_prune) rc = cmd_prune(ctx, prune);
    if (*s_codec) rc = cmd_codec_fit(ctx, codec);
    if (*s_channel) {
      if (*bits_opt) channel.bits = channel_bits;
      rc = cmd_channel(ctx, channel);
    }
    if (*s_plan) rc = cmd_plan(ctx, plan);
    if (*s_sweep) rc = cmd_sweep(ctx, sweep);
    if (*s_jscc) rc = cmd_jscc_sweep(ctx, jscc);
    if (*s_lbuild) rc = cmd_lookup_build(ctx, lbuild);
    if (*s_lquery) rc = cmd_lookup_query(ctx, lquery);
    ctx.outputs.commit();
    return rc;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return 1;
  }
}

} // namespace coinfer::cli
