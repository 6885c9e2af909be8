#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "ace/errors.hpp"

namespace ace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// 64-bit finalizer from SplitMix64 (Steele, Lea, Flood; Vigna's constants).
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based stream: the i-th output is mix64(key + i*gamma), so state is
// just (seed, stream_id, counter) and any position can be re-seeked exactly.
// Distinct stream_ids under one seed give statistically independent sequences.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), counter_(0) {
    key_ = mix64(seed + 0x9E3779B97F4A7C15ULL * mix64(stream_id + 0xD1B54A32D192ED03ULL));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t c) noexcept { counter_ = c; }

  std::uint64_t next_u64() {
    return mix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double a, double b) {
    if (!(a < b)) throw param_error("uniform law requires a < b");
    return a + (b - a) * next_unit();
  }

  // Box-Muller; consumes exactly two raw draws so the counter fully
  // determines the sequence (no cached spare).
  double next_normal(double mu, double sd) {
    if (!(sd > 0.0)) throw param_error("normal law requires sd > 0");
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sd * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double next_bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw param_error("bernoulli law requires p in [0,1]");
    return next_unit() < p ? 1.0 : 0.0;
  }

  // Derived stream for a worker / item; deterministic in (stream_id, child).
  RngStream fork(std::uint64_t child) const {
    return RngStream(seed_, mix64(stream_id_ ^ (mix64(child) + 0x9E3779B97F4A7C15ULL)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_;
  std::uint64_t key_;
};

// Distribution spec for draw().
struct Law {
  enum class Kind { Uniform, Normal, Bernoulli };
  Kind kind;
  double p1;  // a / mu / p
  double p2;  // b / sd / unused

  static Law uniform(double a, double b) {
    if (!(a < b)) throw param_error("uniform law requires a < b");
    return Law{Kind::Uniform, a, b};
  }
  static Law normal(double mu, double sd) {
    if (!(sd > 0.0)) throw param_error("normal law requires sd > 0");
    return Law{Kind::Normal, mu, sd};
  }
  static Law bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw param_error("bernoulli law requires p in [0,1]");
    return Law{Kind::Bernoulli, p, 0.0};
  }
};

// Fills row-major so the draw order matches the logical row order.
inline Matrix draw(RngStream& stream, const Law& law, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 0 || cols < 0) throw param_error("draw: negative extent");
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      switch (law.kind) {
        case Law::Kind::Uniform: out(i, j) = stream.next_uniform(law.p1, law.p2); break;
        case Law::Kind::Normal: out(i, j) = stream.next_normal(law.p1, law.p2); break;
        case Law::Kind::Bernoulli: out(i, j) = stream.next_bernoulli(law.p1); break;
      }
    }
  }
  return out;
}

inline Vector draw_vector(RngStream& stream, const Law& law, Eigen::Index n) {
  return draw(stream, law, n, 1).col(0);
}

}  // namespace ace
