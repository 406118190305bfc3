#include "mkc/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mkc/errors.hpp"

namespace mkc {
namespace {

constexpr std::uint32_t kTop = 1u << 24;

}  // namespace

CdfTable::CdfTable(std::int32_t min_symbol, std::vector<std::uint32_t> cumulative)
    : min_symbol_(min_symbol), cumulative_(std::move(cumulative)) {
  if (cumulative_.size() < 2) throw ConfigError("cdf table needs at least one symbol");
  if (cumulative_.front() != 0 || cumulative_.back() != kCdfTotal) {
    throw ConfigError("cdf table must start at 0 and end at 65536");
  }
  for (std::size_t i = 1; i < cumulative_.size(); ++i) {
    if (cumulative_[i] <= cumulative_[i - 1]) {
      throw ConfigError("cdf table not strictly increasing at entry " + std::to_string(i));
    }
  }
}

std::int32_t CdfTable::find(std::uint32_t target) const {
  // Last index i with cumulative_[i] <= target.
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end() - 1, target);
  return min_symbol_ + static_cast<std::int32_t>(it - cumulative_.begin()) - 1;
}

CdfTable build_cdf(std::span<const double> probabilities, std::int32_t min_symbol) {
  const std::size_t n = probabilities.size();
  if (n == 0) throw ConfigError("build_cdf: empty alphabet");
  if (n > kCdfTotal) {
    throw ConfigError("build_cdf: alphabet of " + std::to_string(n) +
                      " symbols exceeds 16-bit precision");
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = probabilities[i];
    if (!std::isfinite(p) || p < 0.0) {
      throw ConfigError("build_cdf: invalid probability at symbol " + std::to_string(i));
    }
    mass += p;
  }
  if (!(mass > 0.0)) throw ConfigError("build_cdf: zero total probability");

  const double total = static_cast<double>(kCdfTotal);
  std::vector<double> ideal(n);
  std::vector<std::int64_t> freq(n);
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ideal[i] = probabilities[i] / mass * total;
    freq[i] = std::max<std::int64_t>(1, std::llround(ideal[i]));
    sum += freq[i];
  }

  // Largest-remainder correction. Surplus counts go to the symbols most
  // under-allocated (ideal - freq largest); deficits are taken from those
  // most over-allocated that can still give a count.
  std::int64_t diff = static_cast<std::int64_t>(kCdfTotal) - sum;
  std::vector<std::size_t> order(n);
  while (diff != 0) {
    std::iota(order.begin(), order.end(), 0);
    if (diff > 0) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ideal[a] - freq[a] > ideal[b] - freq[b];
      });
      for (std::size_t k = 0; k < n && diff > 0; ++k, --diff) ++freq[order[k]];
    } else {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ideal[a] - freq[a] < ideal[b] - freq[b];
      });
      bool changed = false;
      for (std::size_t k = 0; k < n && diff < 0; ++k) {
        if (freq[order[k]] > 1) {
          --freq[order[k]];
          ++diff;
          changed = true;
        }
      }
      if (!changed) throw ConfigError("build_cdf: cannot fit alphabet into table");
    }
  }

  std::vector<std::uint32_t> cum(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cum[i + 1] = cum[i] + static_cast<std::uint32_t>(freq[i]);
  }
  return CdfTable(min_symbol, std::move(cum));
}

void RangeEncoder::encode(std::int32_t symbol, const CdfTable& table) {
  if (!table.contains(symbol)) {
    throw ConfigError("range encoder: symbol " + std::to_string(symbol) + " at index " +
                      std::to_string(count_) + " outside alphabet [" +
                      std::to_string(table.min_symbol()) + ", " +
                      std::to_string(table.max_symbol()) + "]");
  }
  const std::uint32_t r = range_ >> kCdfPrecisionBits;
  low_ += static_cast<std::uint64_t>(table.start(symbol)) * r;
  range_ = r * table.frequency(symbol);
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
  ++count_;
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      if (leading_) {
        leading_ = false;  // always zero; the decoder assumes it
      } else {
        out_.push_back(static_cast<std::uint8_t>(temp + carry));
      }
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFull) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  std::vector<std::uint8_t> out = std::move(out_);
  *this = RangeEncoder();
  return out;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> payload) : in_(payload) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= in_.size()) {
    throw DataError("range decoder: payload truncated after " + std::to_string(pos_) +
                    " bytes");
  }
  return in_[pos_++];
}

std::int32_t RangeDecoder::decode(const CdfTable& table) {
  const std::uint32_t r = range_ >> kCdfPrecisionBits;
  const std::uint32_t target = std::min(code_ / r, kCdfTotal - 1);
  const std::int32_t symbol = table.find(target);
  code_ -= table.start(symbol) * r;
  range_ = r * table.frequency(symbol);
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return symbol;
}

std::vector<std::uint8_t> rc_encode(std::span<const std::int32_t> symbols,
                                    std::span<const CdfTable> tables) {
  if (symbols.size() != tables.size()) {
    throw ConfigError("rc_encode: " + std::to_string(symbols.size()) + " symbols but " +
                      std::to_string(tables.size()) + " tables");
  }
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(symbols[i], tables[i]);
  return enc.finish();
}

std::vector<std::int32_t> rc_decode(std::span<const std::uint8_t> payload,
                                    std::span<const CdfTable> tables, std::size_t count) {
  if (count > tables.size()) {
    throw ConfigError("rc_decode: fewer tables than symbols requested");
  }
  RangeDecoder dec(payload);
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = dec.decode(tables[i]);
  return out;
}

double ideal_bits(std::span<const std::int32_t> symbols, std::span<const CdfTable> tables) {
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    bits -= std::log2(static_cast<double>(tables[i].frequency(symbols[i])) / kCdfTotal);
  }
  return bits;
}

}  // namespace mkc
