#include "mkc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "mkc/errors.hpp"

namespace mkc {
namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == b;
  });
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void require_rgb(const Tensor& image, const std::string& path) {
  if (image.rank() != 3 || image.dim(2) != 3 || image.dim(0) == 0 || image.dim(1) == 0) {
    throw DataError(path + ": expected a non-empty [H,W,3] image, got " +
                    shape_str(image.shape()));
  }
}

Tensor load_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError(path + ": cannot read PNG (" + img.message + ")");
  }
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw DataError(path + ": unsupported 16-bit PNG (only 8-bit images are supported)");
  }
  img.format = PNG_FORMAT_RGBA;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    throw DataError(path + ": corrupt PNG (" + img.message + ")");
  }
  Tensor out({img.height, img.width, 3});
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < 3; ++c) out[p * 3 + c] = buf[p * 4 + c] / 255.0;
  }
  return out;
}

void save_png(const Tensor& image, const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(1));
  img.height = static_cast<png_uint_32>(image.dim(0));
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) buf[i] = to_byte(image[i]);
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw DataError(path + ": cannot write PNG (" + img.message + ")");
  }
}

// Next whitespace-separated PPM header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
    } else {
      tok.push_back(c);
    }
  }
  return tok;
}

Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  if (ppm_token(in) != "P6") throw DataError(path + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(ppm_token(in));
    h = std::stoul(ppm_token(in));
    maxval = std::stoul(ppm_token(in));
  } catch (const std::exception&) {
    throw DataError(path + ": malformed PPM header");
  }
  if (maxval != 255) {
    throw DataError(path + ": unsupported PPM maxval " + std::to_string(maxval) +
                    " (only 8-bit images are supported)");
  }
  if (w == 0 || h == 0) throw DataError(path + ": empty PPM");
  std::vector<unsigned char> buf(w * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw DataError(path + ": truncated PPM data");
  }
  Tensor out({h, w, 3});
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i] / 255.0;
  return out;
}

void save_ppm(const Tensor& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  std::vector<char> buf(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) buf[i] = static_cast<char>(to_byte(image[i]));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace

Tensor load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DataError(path + ": cannot open");
  unsigned char magic[8] = {};
  probe.read(reinterpret_cast<char*>(magic), sizeof(magic));
  if (probe.gcount() >= 8 && png_sig_cmp(magic, 0, 8) == 0) return load_png(path);
  if (probe.gcount() >= 2 && magic[0] == 'P') return load_ppm(path);
  throw DataError(path + ": unsupported image format (expected 8-bit PNG or PPM)");
}

void save_image(const Tensor& image, const std::string& path) {
  require_rgb(image, path);
  if (has_suffix(path, ".png")) {
    save_png(image, path);
  } else if (has_suffix(path, ".ppm")) {
    save_ppm(image, path);
  } else {
    throw DataError(path + ": unknown image extension (expected .png or .ppm)");
  }
}

Tensor quantize_8bit(const Tensor& image) {
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = to_byte(image[i]) / 255.0;
  return out;
}

}  // namespace mkc
