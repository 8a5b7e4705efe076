#pragma once

// Link models: Shannon capacities of AWGN and binary symmetric channels,
// transmission latency, and deterministic bit corruption for measuring how
// quantized features degrade over an unprotected BSC.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coinfer/error.hpp"
#include "coinfer/feature_codec.hpp"
#include "coinfer/random.hpp"

namespace coinfer {

enum class ChannelKind { awgn, bsc, fixed_rate };

inline std::string_view to_string(ChannelKind k) {
  switch (k) {
  case ChannelKind::awgn: return "awgn";
  case ChannelKind::bsc: return "bsc";
  case ChannelKind::fixed_rate: return "fixed_rate";
  }
  return "fixed_rate";
}

struct ChannelSpec {
  ChannelKind kind = ChannelKind::fixed_rate;
  double bandwidth_hz = 0.0; // awgn
  double snr_db = 0.0;       // awgn
  double flip_prob = 0.0;    // bsc
  double symbol_rate = 0.0;  // bsc, channel uses per second
  double rate_bps = 0.0;     // fixed_rate

  static ChannelSpec awgn(double bandwidth_hz, double snr_db) {
    ChannelSpec s;
    s.kind = ChannelKind::awgn;
    s.bandwidth_hz = bandwidth_hz;
    s.snr_db = snr_db;
    s.validate();
    return s;
  }
  static ChannelSpec bsc(double p, double symbol_rate) {
    ChannelSpec s;
    s.kind = ChannelKind::bsc;
    s.flip_prob = p;
    s.symbol_rate = symbol_rate;
    s.validate();
    return s;
  }
  static ChannelSpec fixed(double rate_bps) {
    ChannelSpec s;
    s.kind = ChannelKind::fixed_rate;
    s.rate_bps = rate_bps;
    s.validate();
    return s;
  }

  void validate() const {
    switch (kind) {
    case ChannelKind::awgn:
      if (!(bandwidth_hz > 0.0)) throw ValidationError("awgn channel: bandwidth_hz must be > 0");
      if (std::isnan(snr_db)) throw ValidationError("awgn channel: snr_db is NaN");
      break;
    case ChannelKind::bsc:
      if (!(flip_prob >= 0.0 && flip_prob <= 0.5)) throw ValidationError("bsc channel: flip_prob must be in [0, 0.5]");
      if (!(symbol_rate > 0.0)) throw ValidationError("bsc channel: symbol_rate must be > 0");
      break;
    case ChannelKind::fixed_rate:
      if (!(rate_bps > 0.0)) throw ValidationError("fixed_rate channel: rate_bps must be > 0");
      break;
    }
  }

  bool operator==(const ChannelSpec&) const = default;
};

// W log2(1 + SNR) in bits/s; snr_db = -inf gives 0.
inline double awgn_capacity(double bandwidth_hz, double snr_db) {
  if (!(bandwidth_hz > 0.0)) throw RangeError("awgn_capacity: bandwidth must be > 0");
  return bandwidth_hz * std::log2(1.0 + std::pow(10.0, snr_db / 10.0));
}

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

// 1 - H2(p) bits per channel use.
inline double bsc_capacity(double p) {
  if (!(p >= 0.0 && p <= 0.5)) throw RangeError("bsc_capacity: p=" + std::to_string(p) + " not in [0, 0.5]");
  return 1.0 - binary_entropy(p);
}

inline double effective_rate(const ChannelSpec& spec) {
  switch (spec.kind) {
  case ChannelKind::awgn: return awgn_capacity(spec.bandwidth_hz, spec.snr_db);
  case ChannelKind::bsc: return bsc_capacity(spec.flip_prob) * spec.symbol_rate;
  case ChannelKind::fixed_rate: return spec.rate_bps;
  }
  return 0.0;
}

class UnreachableError : public Error {
public:
  using Error::Error;
};

inline double transmit_latency(std::uint64_t bits, const ChannelSpec& spec) {
  if (bits == 0) return 0.0;
  const double rate = effective_rate(spec);
  if (!(rate > 0.0)) {
    throw UnreachableError("cannot transmit " + std::to_string(bits) + " bits: " + std::string(to_string(spec.kind)) +
                           " channel has zero effective rate");
  }
  return static_cast<double>(bits) / rate;
}

// ---------------------------------------------------------------------------
// Bit streams

class BitStream {
public:
  BitStream() = default;
  explicit BitStream(std::size_t bits) : bytes_((bits + 7) / 8, 0), size_(bits) {}

  std::size_t size() const { return size_; }
  bool get(std::size_t i) const { return (bytes_[i >> 3] >> (7 - (i & 7))) & 1u; }
  void set(std::size_t i, bool b) {
    const auto bit = static_cast<std::uint8_t>(1u << (7 - (i & 7)));
    if (b) {
      bytes_[i >> 3] |= bit;
    } else {
      bytes_[i >> 3] &= static_cast<std::uint8_t>(~bit);
    }
  }
  void flip(std::size_t i) { bytes_[i >> 3] ^= static_cast<std::uint8_t>(1u << (7 - (i & 7))); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  std::size_t count_differences(const BitStream& other) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < bytes_.size(); ++i) n += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(bytes_[i] ^ other.bytes_[i])));
    return n;
  }

  bool operator==(const BitStream&) const = default;

private:
  std::vector<std::uint8_t> bytes_;
  std::size_t size_ = 0;
};

// Flips bit i iff uniform(seed, i) < p. The decision for each bit depends
// only on its index, so any partition of the stream yields the same result.
inline BitStream corrupt_bits(BitStream payload, double p, std::uint64_t seed, std::size_t first = 0,
                              std::size_t last = std::numeric_limits<std::size_t>::max()) {
  if (!(p >= 0.0 && p <= 0.5)) throw RangeError("corrupt_bits: p=" + std::to_string(p) + " not in [0, 0.5]");
  last = std::min(last, payload.size());
  for (std::size_t i = first; i < last; ++i) {
    if (counter_uniform(seed, i) < p) payload.flip(i);
  }
  return payload;
}

// Symbols packed MSB first, `bits` bits each.
inline BitStream pack_symbols(std::span<const std::uint32_t> symbols, std::uint32_t bits) {
  BitStream s(symbols.size() * bits);
  std::size_t pos = 0;
  for (auto sym : symbols) {
    for (std::uint32_t b = bits; b-- > 0;) s.set(pos++, (sym >> b) & 1u);
  }
  return s;
}

inline std::vector<std::uint32_t> unpack_symbols(const BitStream& s, std::uint32_t bits) {
  std::vector<std::uint32_t> out(s.size() / bits);
  std::size_t pos = 0;
  for (auto& sym : out) {
    std::uint32_t v = 0;
    for (std::uint32_t b = 0; b < bits; ++b) v = (v << 1) | static_cast<std::uint32_t>(s.get(pos++));
    sym = v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quantized features over an unprotected BSC

struct JsccPoint {
  double p = 0.0;
  double mse = 0.0;
};

// For each p, samples are quantized, Gray-mapped, packed, corrupted and
// decoded. All p share the seed, so the flips at a smaller p are a subset of
// the flips at a larger one.
inline std::vector<JsccPoint> jscc_distortion_sweep(const Codebook& cb, std::span<const double> samples,
                                                    std::span<const double> p_values, std::uint64_t seed) {
  if (samples.empty()) throw RangeError("jscc_distortion_sweep: no samples");
  cb.validate();
  auto idx = encode(cb, samples);
  for (auto& i : idx) i = gray_encode(i);
  const auto clean = pack_symbols(idx, cb.bits_per_symbol);

  std::vector<JsccPoint> out;
  for (double p : p_values) {
    auto received = unpack_symbols(corrupt_bits(clean, p, seed), cb.bits_per_symbol);
    for (auto& g : received) g = gray_decode(g);
    const auto values = decode(cb, received);
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) acc += (samples[i] - values[i]) * (samples[i] - values[i]);
    out.push_back({p, acc / static_cast<double>(samples.size())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json channel_to_json(const ChannelSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  switch (s.kind) {
  case ChannelKind::awgn:
    j["bandwidth_hz"] = s.bandwidth_hz;
    j["snr_db"] = s.snr_db;
    break;
  case ChannelKind::bsc:
    j["flip_prob"] = s.flip_prob;
    j["symbol_rate"] = s.symbol_rate;
    break;
  case ChannelKind::fixed_rate:
    j["rate_bps"] = s.rate_bps;
    break;
  }
  return j;
}

inline ChannelSpec channel_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  auto need = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
      throw ValidationError(kind + " channel: missing numeric field '" + key + "'");
    }
    return j.at(key).get<double>();
  };
  if (kind == "awgn") return ChannelSpec::awgn(need("bandwidth_hz"), need("snr_db"));
  if (kind == "bsc") return ChannelSpec::bsc(need("flip_prob"), need("symbol_rate"));
  if (kind == "fixed_rate") return ChannelSpec::fixed(need("rate_bps"));
  throw ValidationError("unknown channel kind '" + kind + "'");
}

} // namespace coinfer
