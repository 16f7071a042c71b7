#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace nsm {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by (seed, stream id); the seed becomes the Philox
/// key and the stream id occupies the upper half of the counter, so distinct
/// (seed, stream) pairs never share output blocks. Satisfies
/// UniformRandomBitGenerator with 64-bit outputs.
class Philox {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Single application of the bijection; exposed for known-answer tests.
  static Block encrypt(Block counter, Key key);

 private:
  Key key_{};
  Block counter_{};
  Block buffer_{};
  int used_ = 4;
};

using Rng = Philox;

/// Derive a stream id from up to three task coordinates.
std::uint64_t stream_id(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);
/// Hash a stage label into a stream coordinate.
std::uint64_t label_id(std::string_view label);

inline Rng make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return Rng(seed, stream_id(a, b, c));
}

/// Uniform double in [0, 1) with 53 random bits.
double uniform01(Rng& rng);

}  // namespace nsm
