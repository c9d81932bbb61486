#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace girsanov {

/// Philox4x32 with 10 rounds: a counter-based generator whose output block is a pure
/// function of {counter, key}. Matches the published known-answer vectors, so any
/// standard implementation can be used to cross-check streams.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t prod0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t prod1 = std::uint64_t{kMul1} * ctr[2];
      const std::array<std::uint32_t, 4> next = {
          static_cast<std::uint32_t>(prod1 >> 32) ^ ctr[1] ^ key[0],
          static_cast<std::uint32_t>(prod1),
          static_cast<std::uint32_t>(prod0 >> 32) ^ ctr[3] ^ key[1],
          static_cast<std::uint32_t>(prod0)};
      ctr = next;
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

/// One trajectory's private random stream. The counter block is laid out as
/// {block_lo, block_hi, sample_lo, sample_hi} with key {seed_lo, seed_hi}, so every
/// draw is a pure function of (seed, sample_index, draw position): distinct samples
/// never share bits and any sample can be regenerated in isolation, on any thread.
///
/// Draw layout: uniforms are consumed two per Philox block (53-bit mantissas built
/// from word pairs). Gaussians are produced by Box-Muller in pairs, with the second
/// value cached; interleaved uniform draws (e.g. exit-bridge coins) consume the next
/// uniform in sequence without disturbing a cached Gaussian.
class SampleRng {
 public:
  SampleRng(std::uint64_t seed, std::uint64_t sample_index) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        idx_lo_(static_cast<std::uint32_t>(sample_index)),
        idx_hi_(static_cast<std::uint32_t>(sample_index >> 32)) {}

  /// Uniform variate on the open interval (0, 1); never returns 0 or 1.
  double uniform01() noexcept {
    if (word_pos_ >= 4) refill();
    const std::uint64_t hi = words_[word_pos_];
    const std::uint64_t lo = words_[word_pos_ + 1];
    word_pos_ += 2;
    const std::uint64_t bits = (hi << 32) | lo;
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal variate (Box-Muller).
  double gaussian() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = kTwoPi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;

  void refill() noexcept {
    words_ = Philox4x32::block({block_lo_, block_hi_, idx_lo_, idx_hi_}, key_);
    if (++block_lo_ == 0) ++block_hi_;
    word_pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t idx_lo_;
  std::uint32_t idx_hi_;
  std::uint32_t block_lo_ = 0;
  std::uint32_t block_hi_ = 0;
  std::array<std::uint32_t, 4> words_{};
  int word_pos_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace girsanov
