#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mkc/entropy.hpp"
#include "mkc/model.hpp"

namespace mkc {

inline constexpr std::array<char, 4> kBitstreamMagic = {'M', 'K', 'C', '1'};
inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::size_t kHeaderBytes = 26;

// Fixed 26-byte header, big-endian:
//   magic "MKC1" | version u8 | loss u8 | height u16 | width u16 |
//   pad_h u8 | pad_w u8 | latent_h u16 | latent_w u16 | channels u16 |
//   hyper_len u32 | main_len u32
struct BitstreamHeader {
  std::uint8_t version = kBitstreamVersion;
  std::uint8_t loss = 0;  // 0 = mse, 1 = msssim
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint8_t pad_h = 0;
  std::uint8_t pad_w = 0;
  std::uint16_t latent_h = 0;
  std::uint16_t latent_w = 0;
  std::uint16_t channels = 0;  // M
  std::uint32_t hyper_len = 0;
  std::uint32_t main_len = 0;

  friend bool operator==(const BitstreamHeader&, const BitstreamHeader&) = default;
};

std::vector<std::uint8_t> emit_header(const BitstreamHeader& h);
// Throws DataError on short input, bad magic or unsupported version.
BitstreamHeader parse_header(std::span<const std::uint8_t> bytes);

struct Bitstream {
  BitstreamHeader header;
  std::vector<std::uint8_t> hyper;  // z_hat under the factorized prior
  std::vector<std::uint8_t> main;   // y_hat under the Gaussian conditional

  std::vector<std::uint8_t> serialize() const;
  // Throws DataError when the payload lengths in the header overrun the data.
  static Bitstream parse(std::span<const std::uint8_t> bytes);
  std::size_t size_bytes() const { return kHeaderBytes + hyper.size() + main.size(); }
};

struct EncodeResult {
  Bitstream stream;
  Tensor reconstruction;  // encoder-side x_hat, [H, W, 3] in [0, 1]
  QuantizedLatent y_hat;
  QuantizedLatent z_hat;
  RateEstimate estimate;  // -log2 likelihood of the coded symbols
};

// Pads to the model's stride multiple, quantizes y (after channel selection)
// and z, and range-codes z_hat then y_hat. Throws ConfigError for images
// wider or taller than 65535.
EncodeResult encode_image(const Tensor& image, const ModelState& m);

// Inverse of encode_image; the result equals EncodeResult::reconstruction
// bit for bit when the same ModelState is used.
Tensor decode_image(const Bitstream& stream, const ModelState& m);

// Gaussian parameters of y_hat recomputed from z_hat; shared by both ends.
EntropyParams entropy_parameters(const QuantizedLatent& z_hat, const ModelState& m);

// Completion, synthesis, clamping and cropping of a quantized latent.
Tensor reconstruct(const QuantizedLatent& y_hat, const ModelState& m, std::size_t height,
                   std::size_t width);

// Whole-stream bits (header included) per source pixel.
double stream_bpp(const Bitstream& stream);

}  // namespace mkc
