#pragma once

// Two-step feature encoding for the transmitted split-layer feature:
//
//   x --reduce--> y (out_dim) --quantize--> indices --> link
//   indices --dequantize--> y' --reconstruct--> x'
//
// Dimension reduction is the optimal linear rank-k map (PCA by power
// iteration with deflation). The scalar quantizer is fitted to the data by
// generalized Lloyd iteration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coinfer/error.hpp"
#include "coinfer/random.hpp"

namespace coinfer {

// Dense row-major matrix of samples, one sample per row.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Linear dimension reduction

struct LinearReducer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Matrix projection; // out_dim x in_dim, orthonormal rows
  std::vector<double> mean;
  std::vector<double> explained_variance; // per component, descending
  double total_variance = 0.0;

  void validate(double tol = 1e-6) const {
    if (out_dim < 1 || out_dim > in_dim) throw ValidationError("reducer: need 1 <= out_dim <= in_dim");
    if (projection.rows != out_dim || projection.cols != in_dim || mean.size() != in_dim) {
      throw ValidationError("reducer: projection/mean dimensions do not match in_dim/out_dim");
    }
    for (std::size_t a = 0; a < out_dim; ++a) {
      for (std::size_t b = a; b < out_dim; ++b) {
        const double g = dot(projection.row(a), projection.row(b));
        if (std::abs(g - (a == b ? 1.0 : 0.0)) > tol) {
          throw ValidationError("reducer: projection rows are not orthonormal (rows " + std::to_string(a) + ", " +
                                std::to_string(b) + ")");
        }
      }
    }
  }
};

class RankError : public Error {
public:
  RankError(std::size_t achieved, std::size_t requested)
      : Error("degenerate covariance: achieved rank " + std::to_string(achieved) + " < requested " +
              std::to_string(requested)),
        achieved_(achieved) {}
  std::size_t achieved_rank() const { return achieved_; }

private:
  std::size_t achieved_;
};

struct PowerIterationOptions {
  std::uint64_t seed = 0;
  std::size_t max_iters = 20000;
  double tol = 1e-12;
  // Components whose variance falls below rank_tol * total variance count
  // as missing rank.
  double rank_tol = 1e-12;
};

namespace detail {

inline void orthogonalize(std::span<double> v, const Matrix& basis, std::size_t count) {
  // Two passes of modified Gram-Schmidt keep the basis orthonormal to
  // machine precision.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t b = 0; b < count; ++b) {
      const auto row = basis.row(b);
      const double c = dot(v, row);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * row[i];
    }
  }
}

inline double normalize(std::span<double> v) {
  const double n = std::sqrt(dot(v, v));
  if (n > 0.0) {
    for (auto& x : v) x /= n;
  }
  return n;
}

} // namespace detail

// Top out_dim principal directions of the centered samples. The covariance
// is never formed: each power step applies X^T X / N through two passes
// over the samples, and deflation projects out the components already
// found.
inline LinearReducer fit_reducer(const Matrix& samples, std::size_t out_dim, const PowerIterationOptions& opt = {}) {
  const std::size_t n = samples.rows, d = samples.cols;
  if (out_dim < 1) throw RangeError("fit_reducer: out_dim must be >= 1");
  if (n < out_dim) throw RangeError("fit_reducer: need at least out_dim samples");
  if (d < out_dim) throw RangeError("fit_reducer: out_dim exceeds sample dimension");

  LinearReducer r;
  r.in_dim = d;
  r.out_dim = out_dim;
  r.mean.assign(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < d; ++j) r.mean[j] += samples(s, j);
  }
  for (auto& m : r.mean) m /= static_cast<double>(n);

  Matrix centered(n, d);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < d; ++j) centered(s, j) = samples(s, j) - r.mean[j];
  }
  r.total_variance = std::inner_product(centered.data.begin(), centered.data.end(), centered.data.begin(), 0.0) /
                     static_cast<double>(n);

  std::vector<double> xv(n), w(d), v(d);
  auto apply_cov = [&](std::span<const double> in, std::span<double> out) {
    for (std::size_t s = 0; s < n; ++s) xv[s] = dot(centered.row(s), in);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const auto row = centered.row(s);
      for (std::size_t j = 0; j < d; ++j) out[j] += xv[s] * row[j];
    }
    for (auto& x : out) x /= static_cast<double>(n);
  };

  r.projection = Matrix(out_dim, d);
  for (std::size_t k = 0; k < out_dim; ++k) {
    for (std::size_t j = 0; j < d; ++j) v[j] = counter_normal(derive_seed(opt.seed, k), j);
    detail::orthogonalize(v, r.projection, k);
    if (detail::normalize(v) == 0.0) throw RankError(k, out_dim);

    double lambda = 0.0;
    for (std::size_t it = 0; it < opt.max_iters; ++it) {
      apply_cov(v, w);
      detail::orthogonalize(w, r.projection, k);
      lambda = dot(v, w);
      if (detail::normalize(w) == 0.0) break;
      double delta = 0.0;
      for (std::size_t j = 0; j < d; ++j) delta = std::max(delta, std::abs(w[j] - v[j]));
      std::copy(w.begin(), w.end(), v.begin());
      if (delta < opt.tol) break;
    }
    apply_cov(v, w);
    lambda = dot(v, w);
    if (!(lambda > opt.rank_tol * r.total_variance) || r.total_variance == 0.0) throw RankError(k, out_dim);

    detail::orthogonalize(v, r.projection, k);
    detail::normalize(v);
    std::copy(v.begin(), v.end(), r.projection.row(k).begin());
    r.explained_variance.push_back(lambda);
  }
  return r;
}

inline std::vector<double> reduce(const LinearReducer& r, std::span<const double> x) {
  if (x.size() != r.in_dim) {
    throw RangeError("reduce: expected " + std::to_string(r.in_dim) + " values, got " + std::to_string(x.size()));
  }
  std::vector<double> centered(x.begin(), x.end());
  for (std::size_t j = 0; j < r.in_dim; ++j) centered[j] -= r.mean[j];
  std::vector<double> y(r.out_dim);
  for (std::size_t k = 0; k < r.out_dim; ++k) y[k] = dot(r.projection.row(k), centered);
  return y;
}

inline std::vector<double> reconstruct(const LinearReducer& r, std::span<const double> y) {
  if (y.size() != r.out_dim) {
    throw RangeError("reconstruct: expected " + std::to_string(r.out_dim) + " values, got " +
                     std::to_string(y.size()));
  }
  std::vector<double> x = r.mean;
  for (std::size_t k = 0; k < r.out_dim; ++k) {
    const auto row = r.projection.row(k);
    for (std::size_t j = 0; j < r.in_dim; ++j) x[j] += y[k] * row[j];
  }
  return x;
}

// Mean over samples of the squared reconstruction error per sample.
inline double reconstruction_mse(const LinearReducer& r, const Matrix& samples) {
  double acc = 0.0;
  for (std::size_t s = 0; s < samples.rows; ++s) {
    const auto x = samples.row(s);
    const auto xr = reconstruct(r, reduce(r, x));
    for (std::size_t j = 0; j < r.in_dim; ++j) acc += (x[j] - xr[j]) * (x[j] - xr[j]);
  }
  return acc / static_cast<double>(samples.rows);
}

// ---------------------------------------------------------------------------
// Scalar quantizer

struct Codebook {
  std::vector<double> levels;
  std::uint32_t bits_per_symbol = 0;

  std::size_t size() const { return levels.size(); }

  void validate() const {
    if (bits_per_symbol < 1 || bits_per_symbol > 24) throw ValidationError("codebook: bits must be in 1..24");
    if (levels.size() != (std::size_t{1} << bits_per_symbol)) {
      throw ValidationError("codebook: expected 2^bits = " + std::to_string(std::size_t{1} << bits_per_symbol) +
                            " levels, got " + std::to_string(levels.size()));
    }
    for (std::size_t i = 1; i < levels.size(); ++i) {
      if (!(levels[i] > levels[i - 1])) throw ValidationError("codebook: levels must be strictly increasing");
    }
  }
  bool operator==(const Codebook&) const = default;
};

// Nearest level; equidistant values go to the lower index.
inline std::uint32_t encode_value(const Codebook& cb, double x) {
  if (std::isnan(x)) throw RangeError("encode: NaN input");
  const auto& l = cb.levels;
  const auto j = static_cast<std::size_t>(std::lower_bound(l.begin(), l.end(), x) - l.begin());
  if (j == 0) return 0;
  if (j == l.size()) return static_cast<std::uint32_t>(l.size() - 1);
  const double below = x - l[j - 1], above = l[j] - x;
  return static_cast<std::uint32_t>(above < below ? j : j - 1);
}

inline std::vector<std::uint32_t> encode(const Codebook& cb, std::span<const double> values) {
  std::vector<std::uint32_t> idx(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) idx[i] = encode_value(cb, values[i]);
  return idx;
}

inline std::vector<double> decode(const Codebook& cb, std::span<const std::uint32_t> indices) {
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= cb.size()) {
      throw RangeError("decode: index " + std::to_string(indices[i]) + " at position " + std::to_string(i) +
                       " exceeds codebook size " + std::to_string(cb.size()));
    }
    out[i] = cb.levels[indices[i]];
  }
  return out;
}

inline std::uint64_t payload_bits(const Codebook& cb, std::size_t count) {
  return static_cast<std::uint64_t>(count) * cb.bits_per_symbol;
}

inline double quantization_mse(const Codebook& cb, std::span<const double> samples) {
  double acc = 0.0;
  for (double x : samples) {
    const double e = x - cb.levels[encode_value(cb, x)];
    acc += e * e;
  }
  return acc / static_cast<double>(samples.size());
}

struct CodebookFit {
  Codebook codebook;
  std::vector<double> distortion_history; // MSE before the first update, then after each accepted update
  bool degenerate = false;                 // fewer distinct samples than levels
  std::size_t effective_levels = 0;

  double distortion() const { return distortion_history.back(); }
  std::size_t iterations() const { return distortion_history.size() - 1; }
};

// Generalized Lloyd iteration: assign every sample to its nearest level,
// move each level to the centroid of its cell, repeat until the MSE
// improvement drops below `tol` or `max_iters` updates ran. An update that
// would raise the MSE (round-off) is rejected and ends the fit, so the
// history is non-increasing. Empty cells are re-seeded at the samples with
// the largest current error.
inline CodebookFit fit_codebook(std::span<const double> samples, std::uint32_t bits, std::size_t max_iters = 200,
                                double tol = 1e-12) {
  if (bits < 1 || bits > 24) throw RangeError("fit_codebook: bits must be in 1..24");
  if (samples.empty()) throw RangeError("fit_codebook: no samples");
  for (double x : samples) {
    if (!std::isfinite(x)) throw RangeError("fit_codebook: non-finite sample");
  }
  const std::size_t levels_n = std::size_t{1} << bits;

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  CodebookFit fit;
  fit.codebook.bits_per_symbol = bits;

  if (distinct.size() < levels_n) {
    // Every distinct value gets its own level; the rest are padding just
    // above the maximum and never selected.
    fit.degenerate = true;
    fit.effective_levels = distinct.size();
    auto levels = distinct;
    while (levels.size() < levels_n) {
      levels.push_back(std::nextafter(levels.back(), std::numeric_limits<double>::infinity()));
    }
    fit.codebook.levels = std::move(levels);
    fit.distortion_history.push_back(quantization_mse(fit.codebook, sorted));
    return fit;
  }
  fit.effective_levels = levels_n;

  // Quantiles of the distinct values: strictly increasing by construction.
  std::vector<double> levels(levels_n);
  for (std::size_t j = 0; j < levels_n; ++j) {
    const auto pos = static_cast<std::size_t>((static_cast<double>(j) + 0.5) * static_cast<double>(distinct.size()) /
                                              static_cast<double>(levels_n));
    levels[j] = distinct[std::min(pos, distinct.size() - 1)];
  }

  Codebook cb{levels, bits};
  std::vector<double> sums(levels_n);
  std::vector<std::size_t> counts(levels_n);
  std::vector<std::uint32_t> assign(sorted.size());

  auto measure = [&](const Codebook& c) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    double acc = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const auto a = encode_value(c, sorted[i]);
      assign[i] = a;
      sums[a] += sorted[i];
      ++counts[a];
      const double e = sorted[i] - c.levels[a];
      acc += e * e;
    }
    return acc / static_cast<double>(sorted.size());
  };

  double current = measure(cb);
  fit.distortion_history.push_back(current);

  for (std::size_t it = 0; it < max_iters; ++it) {
    Codebook next = cb;
    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < levels_n; ++j) {
      if (counts[j] > 0) {
        next.levels[j] = sums[j] / static_cast<double>(counts[j]);
      } else {
        empty.push_back(j);
      }
    }
    if (!empty.empty()) {
      std::vector<std::size_t> order(sorted.size());
      std::iota(order.begin(), order.end(), 0);
      auto err = [&](std::size_t i) { return std::abs(sorted[i] - cb.levels[assign[i]]); };
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err(a) > err(b); });
      std::size_t cursor = 0;
      for (auto j : empty) {
        while (cursor < order.size() &&
               std::find(next.levels.begin(), next.levels.end(), sorted[order[cursor]]) != next.levels.end()) {
          ++cursor;
        }
        if (cursor == order.size()) break;
        next.levels[j] = sorted[order[cursor++]];
      }
    }
    std::sort(next.levels.begin(), next.levels.end());
    for (std::size_t j = 1; j < levels_n; ++j) {
      if (!(next.levels[j] > next.levels[j - 1])) {
        next.levels[j] = std::nextafter(next.levels[j - 1], std::numeric_limits<double>::infinity());
      }
    }

    const double updated = measure(next);
    if (updated > current) {
      measure(cb);
      break;
    }
    cb = std::move(next);
    fit.distortion_history.push_back(updated);
    const double improvement = current - updated;
    current = updated;
    if (improvement < tol) break;
  }
  fit.codebook = std::move(cb);
  return fit;
}

// Uniform-width quantizer with 2^bits cells over [lo, hi], levels at cell
// midpoints.
inline Codebook uniform_codebook(double lo, double hi, std::uint32_t bits) {
  if (!(hi > lo)) throw RangeError("uniform_codebook: need hi > lo");
  const std::size_t n = std::size_t{1} << bits;
  Codebook cb{std::vector<double>(n), bits};
  const double width = (hi - lo) / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) cb.levels[j] = lo + (static_cast<double>(j) + 0.5) * width;
  return cb;
}

// ---------------------------------------------------------------------------
// Gray index mapping

inline constexpr std::uint32_t gray_encode(std::uint32_t i) { return i ^ (i >> 1); }

inline constexpr std::uint32_t gray_decode(std::uint32_t g) {
  for (std::uint32_t shift = 1; shift < 32; shift <<= 1) g ^= g >> shift;
  return g;
}

// ---------------------------------------------------------------------------
// Codec configuration used by the planner

struct CodecConfig {
  std::uint64_t reduced_dim = 0;          // elements transmitted after reduction
  std::uint32_t quant_bits = 0;           // bits per transmitted element
  std::uint64_t encoder_flops_overhead = 0; // extra on-device FLOPs of the encoder

  bool operator==(const CodecConfig&) const = default;
  auto operator<=>(const CodecConfig&) const = default;
};

inline std::uint64_t coded_feature_bits(const CodecConfig& config, std::uint64_t element_count_after_reduction) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(element_count_after_reduction, std::uint64_t{config.quant_bits}, &out)) {
    throw OverflowError("coded_feature_bits overflow");
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json codebook_to_json(const Codebook& cb) {
  nlohmann::ordered_json j;
  j["bits"] = cb.bits_per_symbol;
  j["levels"] = cb.levels;
  return j;
}

inline Codebook codebook_from_json(const nlohmann::json& j) {
  Codebook cb{j.at("levels").get<std::vector<double>>(), j.at("bits").get<std::uint32_t>()};
  cb.validate();
  return cb;
}

inline nlohmann::ordered_json reducer_to_json(const LinearReducer& r) {
  nlohmann::ordered_json j;
  j["in_dim"] = r.in_dim;
  j["out_dim"] = r.out_dim;
  j["mean"] = r.mean;
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < r.out_dim; ++k) {
    const auto row = r.projection.row(k);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["projection"] = std::move(rows);
  return j;
}

inline LinearReducer reducer_from_json(const nlohmann::json& j) {
  LinearReducer r;
  r.in_dim = j.at("in_dim").get<std::size_t>();
  r.out_dim = j.at("out_dim").get<std::size_t>();
  r.mean = j.at("mean").get<std::vector<double>>();
  r.projection = Matrix(r.out_dim, r.in_dim);
  const auto& rows = j.at("projection");
  if (rows.size() != r.out_dim) throw ValidationError("reducer: projection must have out_dim rows");
  for (std::size_t k = 0; k < r.out_dim; ++k) {
    auto row = rows[k].get<std::vector<double>>();
    if (row.size() != r.in_dim) throw ValidationError("reducer: projection rows must have in_dim entries");
    std::copy(row.begin(), row.end(), r.projection.row(k).begin());
  }
  r.validate();
  return r;
}

inline nlohmann::ordered_json codec_to_json(const CodecConfig& c) {
  nlohmann::ordered_json j;
  j["reduced_dim"] = c.reduced_dim;
  j["quant_bits"] = c.quant_bits;
  j["encoder_flops_overhead"] = c.encoder_flops_overhead;
  return j;
}

inline CodecConfig codec_from_json(const nlohmann::json& j) {
  CodecConfig c{j.at("reduced_dim").get<std::uint64_t>(), j.at("quant_bits").get<std::uint32_t>(),
                j.value("encoder_flops_overhead", std::uint64_t{0})};
  if (c.reduced_dim < 1 || c.quant_bits < 1 || c.quant_bits > 64) {
    throw ValidationError("codec: reduced_dim must be >= 1 and quant_bits in 1..64");
  }
  return c;
}

} // namespace coinfer
