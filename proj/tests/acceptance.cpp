// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "coinfer/channel.hpp"
#include "coinfer/cli.hpp"
#include "coinfer/feature_codec.hpp"
#include "coinfer/model_profile.hpp"
#include "coinfer/planner.hpp"
#include "coinfer/pruning.hpp"
#include "oracles.hpp"

using namespace coinfer;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = COINFER_FIXTURES;

struct Failure {
  std::string what;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

struct Criterion {
  int id;
  std::string title;
  double limit_s;
  std::function<std::string()> body; // returns a short summary
};

// ---------------------------------------------------------------------------

std::string channel_formulas() {
  const double awgn = awgn_capacity(1e6, 0.0);
  require(std::abs(awgn - 1e6) <= 1e-12 * 1e6, "AWGN(1 MHz, 0 dB) = " + format_double(awgn));
  require(bsc_capacity(0.0) == 1.0, "BSC(0) != 1");
  require(bsc_capacity(0.5) == 0.0, "BSC(0.5) != 0");
  const double c = bsc_capacity(0.11);
  const long double ref = 1.0L - oracle::entropy(0.11L);
  require(std::abs(static_cast<long double>(c) - ref) < 1e-12L, "BSC(0.11) differs from long double entropy");
  require(std::abs(c - 0.5001) <= 0.001, "BSC(0.11) = " + format_double(c));

  std::ostringstream out, err;
  const char* argv[] = {"coinfer", "channel", "--kind", "awgn", "--bandwidth", "1e6", "--snr-db", "0"};
  require(cli::run(8, argv, out, err) == 0, "channel command failed: " + err.str());
  require(out.str().find("capacity: 1e+06 bits/s") != std::string::npos, "CLI printed: " + out.str());
  return "AWGN=" + format_double(awgn) + ", BSC(0.11)=" + format_double(c);
}

std::string data_amplification() {
  const auto profile = load_profile(kFixtures / "resnet18_cifar10.json");
  std::size_t first_conv = profile.size();
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile.layers[i].kind == LayerKind::conv) {
      first_conv = i;
      break;
    }
  }
  require(first_conv < profile.size(), "no conv layer");
  const std::size_t split = first_conv + 1;
  require(is_valid_split(profile, split), "split after first conv is not splittable");
  // 64 channels at 32x32, 32-bit floats; input is 3x32x32 at 8 bits.
  const std::uint64_t expect_feature = 64ull * 32 * 32 * 32;
  const std::uint64_t expect_input = 3ull * 32 * 32 * 8;
  const auto fb = feature_bits(profile, split);
  const auto ib = feature_bits(profile, 0);
  require(fb == expect_feature && fb == 2'097'152, "feature bits " + std::to_string(fb));
  require(ib == expect_input && ib == 24'576, "input bits " + std::to_string(ib));
  const double ratio = static_cast<double>(fb) / static_cast<double>(ib);
  require(ratio >= 80.0, "ratio " + format_double(ratio));
  const auto amp = amplification_points(profile);
  require(!amp.empty() && amp.front().split == split, "largest amplification is not at the first conv");
  return std::to_string(fb) + " vs " + std::to_string(ib) + " bits, ratio " + format_double(ratio);
}

WeightTensor random_tensor(std::mt19937_64& rng, const std::string& name) {
  std::uniform_int_distribution<std::size_t> channels(1, 64), per(1, 27);
  std::normal_distribution<float> w(0.0f, 1.0f);
  WeightTensor t{name, {channels(rng), per(rng)}, {}};
  t.values.resize(t.dims[0] * t.dims[1]);
  for (auto& v : t.values) v = w(rng);
  // Occasionally duplicate a channel to create norm ties.
  if (t.dims[0] > 2 && std::uniform_int_distribution<int>(0, 2)(rng) == 0) {
    const std::size_t a = rng() % t.dims[0], b = rng() % t.dims[0];
    std::copy_n(t.values.begin() + static_cast<long>(a * t.dims[1]), t.dims[1],
                t.values.begin() + static_cast<long>(b * t.dims[1]));
  }
  return t;
}

// Exact schedule: ratios a/1024 so floor(S*C) = (a*C) >> 10.
std::vector<std::uint64_t> random_numerators(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint64_t> len(1, 5), num(0, 1000);
  std::vector<std::uint64_t> a(len(rng));
  for (auto& x : a) x = num(rng);
  std::sort(a.begin(), a.end());
  return a;
}

std::string pruning_fidelity() {
  std::mt19937_64 rng(20240601);
  std::size_t iterations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<WeightTensor> tensors = {random_tensor(rng, "conv")};
    const auto nums = random_numerators(rng);
    std::vector<double> ratios;
    for (auto a : nums) ratios.push_back(std::ldexp(static_cast<double>(a), -10));
    const SparsitySchedule schedule(ratios);
    const auto hook = gaussian_perturbation_hook(static_cast<std::uint64_t>(trial), 0.1);
    const std::size_t c = tensors[0].channels(), per = tensors[0].channel_size();

    for (std::size_t i = 0; i < schedule.size(); ++i, ++iterations) {
      const auto before = tensors;
      auto step = prune_iteration(tensors, schedule, i, hook);
      const auto& mask = step.masks.at(0);
      const auto& after = step.tensors.at(0);

      // (b) cardinality
      const std::size_t expect_masked = static_cast<std::size_t>((nums[i] * c) >> 10);
      require(c - mask.kept_count() == expect_masked,
              "trial " + std::to_string(trial) + ": masked " + std::to_string(c - mask.kept_count()) + ", want " +
                  std::to_string(expect_masked));

      // masked channels are the smallest norms, ties to the lower index
      std::vector<long double> norms(c, 0.0L);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t k = 0; k < per; ++k) {
          const long double v = before[0].values[ch * per + k];
          norms[ch] += v * v;
        }
      }
      for (std::size_t m = 0; m < c; ++m) {
        if (mask.kept[m]) continue;
        for (std::size_t k = 0; k < c; ++k) {
          if (!mask.kept[k]) continue;
          require(norms[m] < norms[k] || (norms[m] == norms[k] && m < k) ||
                      std::abs(static_cast<double>(norms[m] - norms[k])) < 1e-9,
                  "trial " + std::to_string(trial) + ": masked channel has a larger norm than a kept one");
        }
      }

      // (a) recovery: masked rows bit-identical; kept rows equal the hook's
      // output on the zeroed copy.
      auto replay = before;
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (!mask.kept[ch]) std::fill_n(replay[0].values.begin() + static_cast<long>(ch * per), per, 0.0f);
      }
      hook(std::span<WeightTensor>(replay), i);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float* got = after.values.data() + ch * per;
        const float* want = mask.kept[ch] ? replay[0].values.data() + ch * per : before[0].values.data() + ch * per;
        require(std::memcmp(got, want, per * sizeof(float)) == 0,
                "trial " + std::to_string(trial) + ": channel " + std::to_string(ch) + " not as expected at iteration " +
                    std::to_string(i));
      }
      tensors = step.tensors;
    }

    // (c) nesting on a fixed tensor across the sorted ratios
    const auto norms = channel_norms(tensors[0]);
    std::vector<bool> prev(c, true);
    for (double r : ratios) {
      const auto m = select_mask(norms, r);
      for (std::size_t ch = 0; ch < c; ++ch) require(!m.kept[ch] || prev[ch], "kept sets not nested");
      prev = m.kept;
    }

    // (d) split-layer feature bits scale by kept/total
    ModelProfile p;
    p.name = "stack";
    p.input_shape = {3, 8, 8};
    p.layers.push_back({"conv", LayerKind::conv, 1000, 500, {c, 4, 4}, 32, true, std::nullopt});
    p.layers.push_back({"fc", LayerKind::fc, 100, 100, {10}, 32, true, std::nullopt});
    auto work = tensors;
    const auto report = run_schedule(work, schedule, identity_hook(), SplitOutput{16, 32});
    const auto pruned = apply_to_profile(p, report, 1);
    const auto kept = report.masks.at(0).kept_count();
    require(feature_bits(pruned, 1) * c == feature_bits(p, 1) * kept, "split feature bits not scaled by kept/total");
    require(report.split_output_bits == feature_bits(pruned, 1), "report split bits disagree with profile");
  }
  return "1000 tensors, " + std::to_string(iterations) + " iterations";
}

double subspace_mse(const Matrix& x, const std::vector<double>& mean, const std::vector<std::vector<double>>& basis) {
  double acc = 0.0;
  std::vector<double> r(x.cols);
  for (std::size_t s = 0; s < x.rows; ++s) {
    for (std::size_t j = 0; j < x.cols; ++j) r[j] = x(s, j) - mean[j];
    for (const auto& b : basis) {
      double c = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) c += b[j] * (x(s, j) - mean[j]);
      for (std::size_t j = 0; j < x.cols; ++j) r[j] -= c * b[j];
    }
    for (double v : r) acc += v * v;
  }
  return acc / static_cast<double>(x.rows);
}

std::vector<std::vector<double>> random_orthonormal(std::mt19937_64& rng, std::size_t k, std::size_t d) {
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> q;
  while (q.size() < k) {
    std::vector<double> v(d);
    for (auto& x : v) x = g(rng);
    for (const auto& b : q) {
      double c = 0.0;
      for (std::size_t j = 0; j < d; ++j) c += b[j] * v[j];
      for (std::size_t j = 0; j < d; ++j) v[j] -= c * b[j];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-8) continue;
    for (auto& x : v) x /= n;
    q.push_back(std::move(v));
  }
  return q;
}

std::string codec_optimality() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> samples(100'000);
  for (auto& s : samples) s = u(rng);
  const auto fit = fit_codebook(samples, 1);
  require(fit.codebook.size() == 2, "1-bit codebook does not have 2 levels");
  require(std::abs(fit.codebook.levels[0] - 0.25) <= 0.02 && std::abs(fit.codebook.levels[1] - 0.75) <= 0.02,
          "levels " + format_double(fit.codebook.levels[0]) + ", " + format_double(fit.codebook.levels[1]));

  std::size_t histories = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(seed);
    std::normal_distribution<double> g;
    std::exponential_distribution<double> e(2.0);
    std::vector<double> xs(5000);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = (seed % 3 == 0) ? u(r) : (seed % 3 == 1) ? g(r) : e(r);
    for (std::uint32_t bits = 1; bits <= 4; ++bits) {
      const auto f = fit_codebook(xs, bits);
      for (std::size_t i = 1; i < f.distortion_history.size(); ++i) {
        require(f.distortion_history[i] <= f.distortion_history[i - 1],
                "distortion increased at seed " + std::to_string(seed) + ", bits " + std::to_string(bits));
      }
      ++histories;
    }
  }

  std::size_t trials = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 r(1000 + seed);
    std::normal_distribution<double> g;
    const std::size_t n = 400, d = 16, k = 4;
    std::vector<double> scale(d);
    for (std::size_t j = 0; j < d; ++j) scale[j] = std::pow(0.7, static_cast<double>(j));
    Matrix mix(d, d);
    for (auto& v : mix.data) v = g(r);
    Matrix x(n, d);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<double> z(d);
      for (std::size_t j = 0; j < d; ++j) z[j] = g(r) * scale[j];
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 1.5;
        for (std::size_t b = 0; b < d; ++b) acc += mix(a, b) * z[b];
        x.data[s * d + a] = acc;
      }
    }
    PowerIterationOptions opt;
    opt.seed = seed;
    const auto red = fit_reducer(x, k, opt);
    std::vector<std::vector<double>> pca(k);
    for (std::size_t c = 0; c < k; ++c) pca[c].assign(red.projection.row(c).begin(), red.projection.row(c).end());
    const double pca_mse = subspace_mse(x, red.mean, pca);
    const double lib_mse = reconstruction_mse(red, x);
    require(std::abs(pca_mse - lib_mse) <= 1e-9 * std::max(1.0, pca_mse), "library mse disagrees with oracle");
    for (int t = 0; t < 100; ++t) {
      const double rnd = subspace_mse(x, red.mean, random_orthonormal(r, k, d));
      require(pca_mse < rnd, "random projection beat PCA at seed " + std::to_string(seed));
    }
    ++trials;
  }
  return "levels [" + format_double(fit.codebook.levels[0]) + ", " + format_double(fit.codebook.levels[1]) + "], " +
         std::to_string(histories) + " monotone histories, " + std::to_string(trials) + "x100 projections";
}

std::string planner_equivalence() {
  std::mt19937_64 rng(99);
  std::size_t configs = 0, ties = 0, no_plan = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto profile = oracle::random_profile(rng);
    const auto env = oracle::random_environment(rng, profile);

    std::vector<double> all_sparsities = {0.0, 0.25, 0.5};
    std::vector<double> sparsities;
    for (double s : all_sparsities) {
      if (s == 0.0 || rng() % 2) sparsities.push_back(s);
    }
    std::vector<std::optional<CodecConfig>> codecs = {std::nullopt};
    const std::vector<CodecConfig> pool = {{4, 8, 0}, {8, 4, 0}, {2, 16, 0}, {16, 2, 1024}, {32, 4, 4096}, {4, 8, 256}};
    for (const auto& c : pool) {
      if (rng() % 3 != 0) codecs.push_back(c);
    }
    ConfigGrid grid;
    grid.splits = valid_splits(profile);
    grid.sparsities = sparsities;
    grid.codecs = codecs;
    while (grid.size() > 200) grid.codecs.pop_back();

    std::set<double> dims = {0}, bits = {0};
    for (const auto& c : grid.codecs) {
      if (c) {
        dims.insert(static_cast<double>(c->reduced_dim));
        bits.insert(static_cast<double>(c->quant_bits));
      }
    }
    const std::vector<double> sp_axis(grid.sparsities.begin(), grid.sparsities.end());
    const std::vector<double> dim_axis(dims.begin(), dims.end()), bit_axis(bits.begin(), bits.end());
    std::uniform_real_distribution<double> acc(0.85, 1.0);
    std::vector<double> values;
    oracle::AccuracyTable table;
    for (double s : sp_axis)
      for (double d : dim_axis)
        for (double b : bit_axis) {
          values.push_back(acc(rng));
          table[{s, static_cast<std::uint64_t>(d), static_cast<std::uint32_t>(b)}] = values.back();
        }
    const double threshold = 0.9;
    const AccuracyModel model(threshold, {std::vector<double>{}, sp_axis, dim_axis, bit_axis}, values);

    const auto naive = oracle::exhaustive(profile, env, grid.splits, grid.sparsities, grid.codecs, table, threshold);
    configs += naive.all.size();
    for (unsigned threads : {1u, 4u}) {
      PlannerOptions opt;
      opt.threads = threads;
      const auto all = evaluate_grid(profile, env, grid, model, opt);
      require(all.size() == naive.all.size(), "plan count differs");
      for (std::size_t i = 0; i < all.size(); ++i) {
        require(all[i] == naive.all[i], "trial " + std::to_string(trial) + ": plan " + std::to_string(i) +
                                            " differs from oracle:\n" + plan_to_json(all[i]).dump() + "\n" +
                                            plan_to_json(naive.all[i]).dump());
      }
      if (naive.best) {
        const auto r = search(profile, env, grid, model, opt);
        require(r.best == *naive.best, "trial " + std::to_string(trial) + ": best plan differs from oracle");
      } else {
        bool threw = false;
        try {
          search(profile, env, grid, model, opt);
        } catch (const NoFeasiblePlanError& e) {
          threw = e.evaluated() == naive.all.size();
        }
        require(threw, "expected NoFeasiblePlanError");
      }
    }
    if (naive.best) {
      std::size_t equal = 0;
      for (const auto& p : naive.all) equal += p.feasible() && p.total_latency_s == naive.best->total_latency_s;
      ties += equal > 1;
    } else {
      ++no_plan;
    }
  }
  require(ties > 0, "no trial exercised a latency tie");
  return "20 trials, " + std::to_string(configs) + " configs, " + std::to_string(ties) + " with latency ties, " +
         std::to_string(no_plan) + " infeasible";
}

std::string pareto_correctness() {
  std::mt19937_64 rng(4242);
  std::ostringstream summary;
  // Uniform, anti-correlated (large frontier) and coarse (many ties).
  for (int kind = 0; kind < 3; ++kind) {
    std::uniform_int_distribution<std::uint64_t> wide(0, 1'000'000), noise(0, 2000), coarse(0, 30);
    std::vector<TradeoffPoint> pts(10'000);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (kind == 0) {
        pts[i] = {wide(rng), wide(rng), i};
      } else if (kind == 1) {
        const auto f = wide(rng);
        pts[i] = {f, 1'000'000 - f + noise(rng), i};
      } else {
        pts[i] = {coarse(rng), coarse(rng), i};
      }
    }
    pts[17] = {pts[3].on_device_flops, pts[3].comm_bits, 17};
    const auto got = pareto_frontier(pts);
    const auto want = oracle::pareto(pts);
    require(got == want, "frontier differs: " + std::to_string(got.size()) + " vs " + std::to_string(want.size()));
    summary << (kind ? ", " : "") << got.size();
  }
  return "frontier sizes " + summary.str() + " of 10000";
}

struct Bundle {
  ModelProfile profile;
  EnvironmentProfile env;
  AccuracyModel accuracy;
  ConfigGrid grid;
};

Bundle load_bundle() {
  Bundle b;
  b.profile = load_profile(kFixtures / "resnet18_cifar10.json");
  b.env = environment_from_json(load_json_file(kFixtures / "raspberry_pi3_edge.json"));
  b.accuracy = accuracy_from_json(load_json_file(kFixtures / "resnet18_cifar10_accuracy.json"));
  b.grid = grid_from_json(load_json_file(kFixtures / "resnet18_cifar10_grid.json"), b.profile);
  return b;
}

std::string endpoint_and_sweep() {
  const auto b = load_bundle();
  const double flops = static_cast<double>(total_flops(b.profile));
  const double params = static_cast<double>(total_params(b.profile));
  const double input_bits = static_cast<double>(feature_bits(b.profile, 0));
  const double result_bits = static_cast<double>(b.profile.result_bits);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int e = 0; e < 50; ++e) {
    auto env = b.env;
    env.device_flops_per_s = std::pow(10.0, 9 + 2 * u(rng));
    env.server_flops_per_s = std::pow(10.0, 11 + 3 * u(rng));
    env.device_memory_bytes = static_cast<std::uint64_t>(std::pow(10.0, 8.5 + 1.5 * u(rng)));
    env.channel = ChannelSpec::fixed(std::pow(10.0, 3 + 5 * u(rng)));
    const double rate = env.channel.rate_bps;
    const auto best = search(b.profile, env, b.grid, b.accuracy).best;
    const double server_only = input_bits / rate + flops / env.server_flops_per_s;
    double bound = server_only;
    if (params * 4 * env.memory_overhead_factor <= static_cast<double>(env.device_memory_bytes)) {
      bound = std::min(bound, flops / env.device_flops_per_s + result_bits / rate);
    }
    require(best.total_latency_s <= bound * (1 + 1e-12),
            "environment " + std::to_string(e) + ": best " + format_double(best.total_latency_s) + " > endpoint " +
                format_double(bound));
  }

  const auto rates = parse_range("1000:10000000:log:25");
  const auto rows = rate_sweep(b.profile, b.env, rates, b.grid, b.accuracy);
  require(rows.size() == 25, "sweep row count");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    require(rows[i].best.total_latency_s <= rows[i - 1].best.total_latency_s, "sweep latency increases");
  }

  // Plateau: the top decade moves the curve by at most 5% of its full span,
  // and the last point is within 1% of the span from the infinite-rate limit.
  const double lo = rows.front().best.total_latency_s, hi = rows.back().best.total_latency_s;
  const double span = lo - hi;
  auto at_rate = [&](double r) {
    std::size_t i = 0;
    while (i + 1 < rows.size() && rows[i + 1].rate_bps <= r * (1 + 1e-9)) ++i;
    return rows[i].best.total_latency_s;
  };
  auto inf_env = b.env;
  inf_env.channel = ChannelSpec::fixed(1e18);
  const double limit = search(b.profile, inf_env, b.grid, b.accuracy).best.total_latency_s;
  require(at_rate(1e6) - hi <= 0.05 * span, "no plateau over the top decade");
  require(hi - limit <= 0.01 * span, "highest rate is far from the infinite-rate limit");

  // Bounded growth: at the lowest rate the chosen plan is a deep, coded split
  // sending far fewer bits than the raw input, and latency is at most a tenth
  // of what server-only inference would take.
  const auto& slow = rows.front().best;
  const double server_only_slow = input_bits / rows.front().rate_bps + flops / b.env.server_flops_per_s;
  require(slow.codec.has_value() && slow.split * 2 >= b.profile.size(), "lowest rate does not pick a deep coded split");
  require(static_cast<double>(slow.comm_bits) * 16 <= input_bits, "lowest-rate plan sends too many bits");
  require(lo <= 0.1 * server_only_slow, "low-rate latency not bounded");
  return "50 environments; sweep " + format_double(lo) + " s -> " + format_double(hi) + " s, limit " +
         format_double(limit) + " s";
}

std::string jscc_sweep() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::vector<double> xs(20'000);
  for (auto& x : xs) x = g(rng);
  const auto cb = fit_codebook(xs, 3).codebook;
  const std::vector<double> zero = {0.0};
  const auto p0 = jscc_distortion_sweep(cb, xs, zero, 1);
  require(p0.at(0).mse == quantization_mse(cb, xs), "p=0 distortion differs from noiseless quantizer");

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> ys(100'000);
  for (auto& y : ys) y = u(rng);
  const Codebook two{{-1.0, 1.0}, 1};
  const double d0 = quantization_mse(two, ys);
  const auto q = decode(two, encode(two, ys));
  double cross = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) cross += ys[i] * q[i];
  cross /= static_cast<double>(ys.size());
  const std::vector<double> ps = {0.05, 0.1, 0.2};
  const auto pts = jscc_distortion_sweep(two, ys, ps, 0);
  std::ostringstream s;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double expect = d0 + 4.0 * ps[i] * cross;
    const double rel = std::abs(pts[i].mse - expect) / expect;
    require(rel <= 0.01, "p=" + format_double(ps[i]) + ": " + format_double(pts[i].mse) + " vs " + format_double(expect));
    s << (i ? ", " : "") << "p=" << ps[i] << " rel err " << std::setprecision(2) << rel;
  }
  return s.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string reproducibility() {
  const auto dir = fs::temp_directory_path() / ("coinfer_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string prof = (kFixtures / "resnet18_cifar10.json").string();
  const std::string env = (kFixtures / "raspberry_pi3_edge.json").string();
  const std::string acc = (kFixtures / "resnet18_cifar10_accuracy.json").string();
  const std::string grid = (kFixtures / "resnet18_cifar10_grid.json").string();

  std::vector<std::string> outputs;
  int run_id = 0;
  for (const char* threads : {"1", "1", "4", "4"}) {
    const auto tag = std::to_string(run_id++);
    const auto plan_out = (dir / ("plan" + tag + ".json")).string();
    const auto plans_csv = (dir / ("plans" + tag + ".csv")).string();
    const auto sweep_out = (dir / ("sweep" + tag + ".csv")).string();
    std::ostringstream out, err;
    const char* plan_argv[] = {"coinfer", "--threads", threads, "plan", "--profile", prof.c_str(), "--env", env.c_str(),
                               "--accuracy", acc.c_str(), "--grid", grid.c_str(), "--out", plan_out.c_str(),
                               "--plans-csv", plans_csv.c_str()};
    require(cli::run(16, plan_argv, out, err) == 0, "plan failed: " + err.str());
    const char* sweep_argv[] = {"coinfer", "--threads", threads, "--self-check", "sweep", "--profile", prof.c_str(),
                                "--env", env.c_str(), "--accuracy", acc.c_str(), "--grid", grid.c_str(),
                                "--out", sweep_out.c_str()};
    require(cli::run(15, sweep_argv, out, err) == 0, "sweep failed: " + err.str());
    outputs.push_back(read_file(plan_out) + read_file(plans_csv) + read_file(sweep_out));
  }
  fs::remove_all(dir);
  for (const auto& o : outputs) require(o == outputs.front(), "outputs differ between runs");
  require(outputs.front().size() > 1000, "outputs suspiciously small");
  return "4 runs (threads 1,1,4,4), " + std::to_string(outputs.front().size()) + " bytes identical";
}

} // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "channel formulas exact", 1.0, channel_formulas},
      {2, "data amplification on bundled profile", 1.0, data_amplification},
      {3, "pruning algorithm fidelity", 30.0, pruning_fidelity},
      {4, "codec optimality", 30.0, codec_optimality},
      {5, "planner equals exhaustive oracle", 30.0, planner_equivalence},
      {6, "pareto frontier correctness", 10.0, pareto_correctness},
      {7, "endpoint dominance and sweep shape", 30.0, endpoint_and_sweep},
      {8, "jscc fault-tolerance sweep", 30.0, jscc_sweep},
      {9, "end-to-end reproducibility", 60.0, reproducibility},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.body();
    } catch (const Failure& f) {
      ok = false;
      detail = f.what;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ok && secs > c.limit_s) {
      ok = false;
      detail += " (took " + format_double(secs) + " s, limit " + format_double(c.limit_s) + " s)";
    }
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.id << " [" << c.title << "] " << std::fixed
              << std::setprecision(3) << secs << "s: " << detail << std::defaultfloat << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
