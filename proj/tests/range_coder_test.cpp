#include <gtest/gtest.h>

#include <cmath>

#include "mkc/entropy.hpp"
#include "mkc/errors.hpp"
#include "mkc/random.hpp"
#include "mkc/range_coder.hpp"

namespace mkc {
namespace {

std::vector<CdfTable> repeat(const CdfTable& t, std::size_t n) {
  return std::vector<CdfTable>(n, t);
}

TEST(BuildCdf, TwoSymbolRounding) {
  // 0.382925 * 65536 = 25095.37
  const std::vector<double> p = {0.382925, 0.617075};
  const CdfTable t = build_cdf(p, 0);
  EXPECT_EQ(t.frequency(0), 25095u);
  EXPECT_EQ(t.frequency(1), 40441u);
}

TEST(BuildCdf, FullAlphabetContract) {
  std::vector<double> pmf(kAlphabetSize);
  gaussian_pmf(0.0, 1.0, pmf);
  const CdfTable t = build_cdf(pmf, kSymbolMin);
  EXPECT_EQ(t.size(), static_cast<std::size_t>(kAlphabetSize));
  EXPECT_EQ(t.cumulative().back(), kCdfTotal);
  for (int s = kSymbolMin; s <= kSymbolMax; ++s) EXPECT_GE(t.frequency(s), 1u);
  EXPECT_EQ(t.frequency(200), 1u);
  // The mode keeps its share up to the floors spent on the tail.
  EXPECT_NEAR(t.frequency(0), 0.3829249 * kCdfTotal, 0.01 * kCdfTotal);
}

TEST(BuildCdf, RejectsInvalidInput) {
  EXPECT_THROW(build_cdf(std::vector<double>{}, 0), ConfigError);
  EXPECT_THROW(build_cdf(std::vector<double>{0.5, -0.1}, 0), ConfigError);
  EXPECT_THROW(build_cdf(std::vector<double>{0.0, 0.0}, 0), ConfigError);
  EXPECT_THROW(build_cdf(std::vector<double>(70000, 1.0), 0), ConfigError);
}

TEST(RangeCoder, EmptySequence) {
  const auto payload = rc_encode({}, {});
  EXPECT_TRUE(rc_decode(payload, {}, 0).empty());
}

TEST(RangeCoder, RoundTripsOverFullAlphabet) {
  std::vector<double> pmf(kAlphabetSize);
  gaussian_pmf(0.3, 2.0, pmf);
  const CdfTable t = build_cdf(pmf, kSymbolMin);
  const std::vector<std::int32_t> symbols = {0, 1, -1, 3, 255, -255, 0, 0, 7, -12};
  const auto tables = repeat(t, symbols.size());
  const auto payload = rc_encode(symbols, tables);
  EXPECT_EQ(rc_decode(payload, tables, symbols.size()), symbols);
}

TEST(RangeCoder, SymbolOutsideAlphabetIsRejected) {
  const CdfTable t = build_cdf(std::vector<double>{0.5, 0.5}, 0);
  const std::vector<std::int32_t> symbols = {0, 2};
  EXPECT_THROW(rc_encode(symbols, repeat(t, 2)), ConfigError);
}

TEST(RangeCoder, TruncatedPayloadFailsLoudly) {
  std::vector<double> pmf(kAlphabetSize);
  gaussian_pmf(0.0, 20.0, pmf);
  const CdfTable t = build_cdf(pmf, kSymbolMin);
  Rng rng(3);
  std::vector<std::int32_t> symbols(500);
  for (auto& s : symbols) s = static_cast<std::int32_t>(rng.below(41)) - 20;
  const auto tables = repeat(t, symbols.size());
  auto payload = rc_encode(symbols, tables);
  payload.resize(payload.size() / 2);
  EXPECT_THROW(rc_decode(payload, tables, symbols.size()), DataError);
}

TEST(RangeCoder, PayloadNearIdealLength) {
  std::vector<double> pmf(kAlphabetSize);
  gaussian_pmf(-1.0, 3.0, pmf);
  const CdfTable t = build_cdf(pmf, kSymbolMin);
  Rng rng(4);
  std::vector<std::int32_t> symbols(4000);
  for (auto& s : symbols) s = quantize_value(-1.0 + 3.0 * rng.normal());
  const auto tables = repeat(t, symbols.size());
  const auto payload = rc_encode(symbols, tables);
  EXPECT_LE(payload.size() * 8.0, ideal_bits(symbols, tables) + 64.0);
  EXPECT_EQ(rc_decode(payload, tables, symbols.size()), symbols);
}

TEST(RangeCoder, CarryPropagationStress) {
  // A heavily skewed table drives low toward the carry boundary often.
  const CdfTable t = build_cdf(std::vector<double>{1.0, 1e-5, 1e-5}, 0);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int32_t> symbols(300);
    for (auto& s : symbols) s = rng.below(100) == 0 ? 1 + static_cast<int>(rng.below(2)) : 0;
    const auto tables = repeat(t, symbols.size());
    EXPECT_EQ(rc_decode(rc_encode(symbols, tables), tables, symbols.size()), symbols);
  }
}

}  // namespace
}  // namespace mkc
