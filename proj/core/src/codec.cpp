#include "mkc/codec.hpp"

#include <algorithm>
#include <string>

#include "mkc/dataset.hpp"
#include "mkc/errors.hpp"
#include "mkc/ops.hpp"
#include "mkc/range_coder.hpp"

namespace mkc {
namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    if (pos_ >= in_.size()) throw DataError("bitstream: header truncated");
    return in_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t hi = u8();
    return static_cast<std::uint16_t>((hi << 8) | u8());
  }
  std::uint32_t u32() {
    const std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint16_t checked_u16(std::size_t v, const char* what) {
  if (v > 0xFFFF) {
    throw ConfigError(std::string(what) + " " + std::to_string(v) +
                      " does not fit the 16-bit header field");
  }
  return static_cast<std::uint16_t>(v);
}

// One logistic table per channel of z_hat.
std::vector<CdfTable> prior_tables(const FactorizedPrior& prior) {
  std::vector<CdfTable> tables;
  std::vector<double> pmf(kAlphabetSize);
  for (std::size_t c = 0; c < prior.loc.size(); ++c) {
    logistic_pmf(prior.loc[c], prior.scale[c], pmf);
    tables.push_back(build_cdf(pmf, kSymbolMin));
  }
  return tables;
}

CdfTable gaussian_table(double mu, double sigma, std::vector<double>& pmf) {
  gaussian_pmf(mu, sigma, pmf);
  return build_cdf(pmf, kSymbolMin);
}

std::vector<std::uint8_t> code_hyper(const QuantizedLatent& z, const FactorizedPrior& prior) {
  const auto tables = prior_tables(prior);
  const std::size_t c = tables.size();
  RangeEncoder enc;
  for (std::size_t i = 0; i < z.symbols.size(); ++i) enc.encode(z.symbols[i], tables[i % c]);
  return enc.finish();
}

std::vector<std::uint8_t> code_main(const QuantizedLatent& y, const EntropyParams& ep) {
  std::vector<double> pmf(kAlphabetSize);
  RangeEncoder enc;
  for (std::size_t i = 0; i < y.symbols.size(); ++i) {
    enc.encode(y.symbols[i], gaussian_table(ep.mu[i], ep.sigma[i], pmf));
  }
  return enc.finish();
}

}  // namespace

std::vector<std::uint8_t> emit_header(const BitstreamHeader& h) {
  Writer w;
  for (char c : kBitstreamMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u8(h.version);
  w.u8(h.loss);
  w.u16(h.height);
  w.u16(h.width);
  w.u8(h.pad_h);
  w.u8(h.pad_w);
  w.u16(h.latent_h);
  w.u16(h.latent_w);
  w.u16(h.channels);
  w.u32(h.hyper_len);
  w.u32(h.main_len);
  return w.take();
}

BitstreamHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw DataError("bitstream: " + std::to_string(bytes.size()) +
                    " bytes is shorter than the " + std::to_string(kHeaderBytes) +
                    "-byte header");
  }
  if (!std::equal(kBitstreamMagic.begin(), kBitstreamMagic.end(), bytes.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    throw DataError("bitstream: bad magic (not an MKC1 stream)");
  }
  Reader r(bytes.subspan(4));
  BitstreamHeader h;
  h.version = r.u8();
  if (h.version != kBitstreamVersion) {
    throw DataError("bitstream: unsupported version " + std::to_string(h.version));
  }
  h.loss = r.u8();
  h.height = r.u16();
  h.width = r.u16();
  h.pad_h = r.u8();
  h.pad_w = r.u8();
  h.latent_h = r.u16();
  h.latent_w = r.u16();
  h.channels = r.u16();
  h.hyper_len = r.u32();
  h.main_len = r.u32();
  return h;
}

std::vector<std::uint8_t> Bitstream::serialize() const {
  BitstreamHeader h = header;
  h.hyper_len = static_cast<std::uint32_t>(hyper.size());
  h.main_len = static_cast<std::uint32_t>(main.size());
  std::vector<std::uint8_t> out = emit_header(h);
  out.insert(out.end(), hyper.begin(), hyper.end());
  out.insert(out.end(), main.begin(), main.end());
  return out;
}

Bitstream Bitstream::parse(std::span<const std::uint8_t> bytes) {
  Bitstream bs;
  bs.header = parse_header(bytes);
  const std::size_t need =
      kHeaderBytes + std::size_t{bs.header.hyper_len} + std::size_t{bs.header.main_len};
  if (bytes.size() < need) {
    throw DataError("bitstream: payload underrun (" + std::to_string(bytes.size()) +
                    " bytes, header promises " + std::to_string(need) + ")");
  }
  const auto hyper_begin = bytes.begin() + kHeaderBytes;
  const auto main_begin = hyper_begin + bs.header.hyper_len;
  bs.hyper.assign(hyper_begin, main_begin);
  bs.main.assign(main_begin, main_begin + bs.header.main_len);
  return bs;
}

EntropyParams entropy_parameters(const QuantizedLatent& z_hat, const ModelState& m) {
  Graph g;
  BoundParams p(g, m.params, false);
  const EntropyVars ev =
      hyper_synthesis(p, g.constant(z_hat.to_tensor()), m.config.transform, m.keep());
  return {ev.mu.value(), ev.sigma.value()};
}

Tensor reconstruct(const QuantizedLatent& y_hat, const ModelState& m, std::size_t height,
                   std::size_t width) {
  Graph g;
  BoundParams p(g, m.params, false);
  const auto kept = m.kept_channels();
  Var full = lccm_complete(g.constant(y_hat.to_tensor()), kept, p(kGateTokens));
  const Tensor x = synthesis_forward(p, full, m.config.transform).value();
  return clamp_unit(crop_top_left(x, height, width));
}

EncodeResult encode_image(const Tensor& image, const ModelState& m) {
  if (image.rank() != 3 || image.dim(2) != m.config.transform.image_channels) {
    throw ConfigError("encode: expected an [H,W,3] image, got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1);
  BitstreamHeader hdr;
  hdr.loss = m.config.loss == LossType::kMse ? 0 : 1;
  hdr.height = checked_u16(h, "image height");
  hdr.width = checked_u16(w, "image width");
  const Tensor padded = pad_edge(image, m.config.transform.pad_multiple());
  const std::size_t ph = padded.dim(0) - h, pw = padded.dim(1) - w;
  if (ph > 0xFF || pw > 0xFF) throw ConfigError("encode: padding exceeds the 8-bit header field");
  hdr.pad_h = static_cast<std::uint8_t>(ph);
  hdr.pad_w = static_cast<std::uint8_t>(pw);

  EncodeResult r;
  {
    Graph g;
    BoundParams p(g, m.params, false);
    Var y = analysis_forward(p, g.constant(padded), m.config.transform);
    const GateVars sel = lcmm_select(y, p(kGateScores), m.keep());
    r.y_hat = quantize(sel.y.value());
    r.z_hat = quantize(hyper_analysis(p, sel.y, m.config.transform).value());
  }
  hdr.latent_h = checked_u16(r.y_hat.shape[0], "latent height");
  hdr.latent_w = checked_u16(r.y_hat.shape[1], "latent width");
  hdr.channels = checked_u16(r.y_hat.shape[2], "latent channels");

  const FactorizedPrior prior = m.prior();
  const EntropyParams ep = entropy_parameters(r.z_hat, m);
  r.stream.hyper = code_hyper(r.z_hat, prior);
  r.stream.main = code_main(r.y_hat, ep);
  hdr.hyper_len = static_cast<std::uint32_t>(r.stream.hyper.size());
  hdr.main_len = static_cast<std::uint32_t>(r.stream.main.size());
  r.stream.header = hdr;

  r.estimate = rate_estimate(gaussian_likelihood(r.y_hat, ep),
                             factorized_likelihood(r.z_hat, prior), h * w);
  r.reconstruction = reconstruct(r.y_hat, m, h, w);
  return r;
}

Tensor decode_image(const Bitstream& stream, const ModelState& m) {
  const BitstreamHeader& h = stream.header;
  const TransformConfig& tc = m.config.transform;
  const std::size_t f = tc.downsampling();
  if (h.channels != m.keep()) {
    throw DataError("bitstream: " + std::to_string(h.channels) +
                    " latent channels, model keeps " + std::to_string(m.keep()));
  }
  if (h.height == 0 || h.width == 0 ||
      std::size_t{h.latent_h} * f != std::size_t{h.height} + h.pad_h ||
      std::size_t{h.latent_w} * f != std::size_t{h.width} + h.pad_w ||
      h.latent_h % TransformConfig::hyper_downsampling() != 0 ||
      h.latent_w % TransformConfig::hyper_downsampling() != 0) {
    throw DataError("bitstream: inconsistent image/latent dimensions for this model");
  }
  if (stream.hyper.size() != h.hyper_len || stream.main.size() != h.main_len) {
    throw DataError("bitstream: payload sizes disagree with the header");
  }

  const std::size_t hz = h.latent_h / TransformConfig::hyper_downsampling();
  const std::size_t wz = h.latent_w / TransformConfig::hyper_downsampling();
  QuantizedLatent z{{hz, wz, tc.hyper_channels}, {}};
  {
    const auto tables = prior_tables(m.prior());
    RangeDecoder dec(stream.hyper);
    z.symbols.resize(hz * wz * tc.hyper_channels);
    for (std::size_t i = 0; i < z.symbols.size(); ++i) {
      z.symbols[i] = dec.decode(tables[i % tables.size()]);
    }
  }
  const EntropyParams ep = entropy_parameters(z, m);
  QuantizedLatent y{{h.latent_h, h.latent_w, h.channels}, {}};
  {
    std::vector<double> pmf(kAlphabetSize);
    RangeDecoder dec(stream.main);
    y.symbols.resize(ep.mu.size());
    for (std::size_t i = 0; i < y.symbols.size(); ++i) {
      y.symbols[i] = dec.decode(gaussian_table(ep.mu[i], ep.sigma[i], pmf));
    }
  }
  return reconstruct(y, m, h.height, h.width);
}

double stream_bpp(const Bitstream& stream) {
  const double pixels =
      static_cast<double>(stream.header.height) * static_cast<double>(stream.header.width);
  return static_cast<double>(stream.size_bytes()) * 8.0 / pixels;
}

}  // namespace mkc
