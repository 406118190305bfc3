#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mkc {

inline constexpr int kCdfPrecisionBits = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecisionBits;

// Cumulative 16-bit frequency table over the symbols
// [min_symbol, min_symbol + size()).
class CdfTable {
 public:
  CdfTable() = default;
  // `cumulative` has size() + 1 entries: 0, ..., kCdfTotal, strictly increasing.
  CdfTable(std::int32_t min_symbol, std::vector<std::uint32_t> cumulative);

  std::int32_t min_symbol() const { return min_symbol_; }
  std::int32_t max_symbol() const {
    return min_symbol_ + static_cast<std::int32_t>(size()) - 1;
  }
  std::size_t size() const { return cumulative_.empty() ? 0 : cumulative_.size() - 1; }
  bool contains(std::int32_t symbol) const {
    return symbol >= min_symbol_ && symbol <= max_symbol();
  }

  std::uint32_t start(std::int32_t symbol) const {
    return cumulative_[static_cast<std::size_t>(symbol - min_symbol_)];
  }
  std::uint32_t frequency(std::int32_t symbol) const {
    const auto i = static_cast<std::size_t>(symbol - min_symbol_);
    return cumulative_[i + 1] - cumulative_[i];
  }
  // Symbol whose interval contains `target` in [0, kCdfTotal).
  std::int32_t find(std::uint32_t target) const;

  const std::vector<std::uint32_t>& cumulative() const { return cumulative_; }

  friend bool operator==(const CdfTable&, const CdfTable&) = default;

 private:
  std::int32_t min_symbol_ = 0;
  std::vector<std::uint32_t> cumulative_;
};

// Frequencies round(P * 65536) after normalising P, raised to at least 1,
// then corrected to sum to 65536 by largest remainders.
CdfTable build_cdf(std::span<const double> probabilities, std::int32_t min_symbol);

// Byte-oriented range encoder: 64-bit low, 32-bit range, carry propagation
// through a cached byte. The always-zero leading byte is not emitted.
class RangeEncoder {
 public:
  void encode(std::int32_t symbol, const CdfTable& table);
  // Flushes the coder state and returns the payload.
  std::vector<std::uint8_t> finish();

  std::size_t symbols() const { return count_; }

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool leading_ = true;
  std::size_t count_ = 0;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  // Throws DataError when the payload is shorter than the coder state.
  explicit RangeDecoder(std::span<const std::uint8_t> payload);

  // Throws DataError when the payload runs out (truncation).
  std::int32_t decode(const CdfTable& table);

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
};

// Whole-sequence convenience wrappers; tables[i] codes symbols[i].
std::vector<std::uint8_t> rc_encode(std::span<const std::int32_t> symbols,
                                    std::span<const CdfTable> tables);
std::vector<std::int32_t> rc_decode(std::span<const std::uint8_t> payload,
                                    std::span<const CdfTable> tables, std::size_t count);

// Ideal code length sum(-log2(freq / 65536)) in bits.
double ideal_bits(std::span<const std::int32_t> symbols, std::span<const CdfTable> tables);

}  // namespace mkc
