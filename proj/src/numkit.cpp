#include "fedmeta/numkit.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace fedmeta {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

void ensure_finite(Scalar x, std::string_view what) {
  if (!std::isfinite(x)) {
    throw NumericError(std::string(what) + ": non-finite value");
  }
}

void ensure_finite(const ParamVector& v, std::string_view what) {
  if (!v.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite entry");
  }
}

ParamVector linear_combine(const std::vector<std::pair<Scalar, ParamVector>>& terms) {
  if (terms.empty()) {
    throw NumericError("linear_combine: empty term list");
  }
  const Eigen::Index n = terms.front().second.size();
  ParamVector out = terms.front().first * terms.front().second;
  for (std::size_t k = 1; k < terms.size(); ++k) {
    if (terms[k].second.size() != n) {
      throw NumericError("linear_combine: dimension mismatch");
    }
    out += terms[k].first * terms[k].second;
  }
  ensure_finite(out, "linear_combine");
  return out;
}

Scalar l2_norm(const ParamVector& v) {
  ensure_finite(v, "l2_norm");
  return v.norm();
}

RngStream::RngStream(std::uint64_t seed) : key_(mix64(seed ^ kGolden)), counter_(0) {}

RngStream::RngStream(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

RngStream RngStream::split(std::string_view label) const {
  return RngStream(mix64(key_ ^ hash_label(label)), 0);
}

RngStream RngStream::split(std::uint64_t index) const {
  return RngStream(mix64(key_ + kGolden * (index + 1)), 0);
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RngStream::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::next_gaussian() {
  // Box-Muller. u1 is shifted into (0, 1] so the log stays finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t RngStream::next_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) {
    throw NumericError("RngStream::next_int: empty range");
  }
  const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
  if (range == 0) {  // full 64-bit span
    return static_cast<std::int64_t>(next_u64());
  }
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % range);
}

ParamVector draw_gaussian(RngStream& rng, int dim, Scalar mean, Scalar stddev) {
  if (dim < 0) {
    throw NumericError("draw_gaussian: negative dimension");
  }
  if (stddev < 0) {
    throw NumericError("draw_gaussian: negative stddev");
  }
  ParamVector out(dim);
  for (int j = 0; j < dim; ++j) {
    out[j] = mean + stddev * rng.next_gaussian();
  }
  return out;
}

}  // namespace fedmeta
