#include "mkc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "mkc/errors.hpp"
#include "mkc/image_io.hpp"
#include "mkc/random.hpp"

namespace mkc {
namespace fs = std::filesystem;

DatasetIndex DatasetIndex::from_directory(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir + ": not a directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".ppm") paths.push_back(entry.path().string());
  }
  if (paths.empty()) throw DataError(dir + ": no .png or .ppm images found");
  std::sort(paths.begin(), paths.end());
  DatasetIndex idx;
  for (const auto& p : paths) {
    idx.images_.push_back(load_image(p));
    idx.names_.push_back(fs::path(p).filename().string());
  }
  return idx;
}

DatasetIndex DatasetIndex::from_images(std::vector<Tensor> images,
                                       std::vector<std::string> names) {
  if (images.empty()) throw DataError("dataset: no images");
  if (names.empty()) {
    for (std::size_t i = 0; i < images.size(); ++i) names.push_back("image" + std::to_string(i));
  }
  if (names.size() != images.size()) throw ConfigError("dataset: name count mismatch");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rank() != 3 || images[i].dim(2) != 3) {
      throw DataError("dataset: " + names[i] + " is not an [H,W,3] image");
    }
  }
  DatasetIndex idx;
  idx.images_ = std::move(images);
  idx.names_ = std::move(names);
  return idx;
}

std::vector<std::size_t> DatasetIndex::epoch_order(std::uint64_t seed,
                                                   std::size_t epoch) const {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x6f72646572ull, epoch));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

Tensor Batch::stacked() const {
  if (images.empty()) return Tensor({0});
  const Shape& s = images.front().shape();
  Tensor out({images.size(), s[0], s[1], s[2]});
  const std::size_t n = images.front().size();
  for (std::size_t b = 0; b < images.size(); ++b) {
    std::copy(images[b].values().begin(), images[b].values().end(), out.data().begin() + b * n);
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out({height, width, c});
  const double sy = static_cast<double>(h) / height, sx = static_cast<double>(w) / width;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      for (std::size_t k = 0; k < c; ++k) {
        const double top = image.at(y0, x0, k) * (1 - tx) + image.at(y0, x1, k) * tx;
        const double bot = image.at(y1, x0, k) * (1 - tx) + image.at(y1, x1, k) * tx;
        out.at(y, x, k) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

Tensor pad_edge(const Tensor& image, std::size_t multiple) {
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const std::size_t ph = (h + multiple - 1) / multiple * multiple;
  const std::size_t pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return image;
  Tensor out({ph, pw, c});
  for (std::size_t y = 0; y < ph; ++y)
    for (std::size_t x = 0; x < pw; ++x)
      for (std::size_t k = 0; k < c; ++k)
        out.at(y, x, k) = image.at(std::min(y, h - 1), std::min(x, w - 1), k);
  return out;
}

Tensor crop_top_left(const Tensor& image, std::size_t height, std::size_t width) {
  if (height > image.dim(0) || width > image.dim(1)) {
    throw ConfigError("crop " + std::to_string(height) + "x" + std::to_string(width) +
                      " exceeds image " + shape_str(image.shape()));
  }
  const std::size_t c = image.dim(2);
  Tensor out({height, width, c});
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(image.values().begin() + static_cast<long>(y * image.dim(1) * c), width * c,
                out.data().begin() + static_cast<long>(y * width * c));
  }
  return out;
}

namespace {

Tensor crop_at(const Tensor& image, std::size_t y0, std::size_t x0, std::size_t size) {
  const std::size_t c = image.dim(2);
  Tensor out({size, size, c});
  for (std::size_t y = 0; y < size; ++y) {
    const auto src = image.values().begin() +
                     static_cast<long>(((y0 + y) * image.dim(1) + x0) * c);
    std::copy_n(src, size * c, out.data().begin() + static_cast<long>(y * size * c));
  }
  return out;
}

bool fits(const Tensor& image, std::size_t crop) {
  return image.dim(0) >= crop && image.dim(1) >= crop;
}

}  // namespace

Batch make_batch(const DatasetIndex& index, const BatchOptions& options, std::uint64_t seed,
                 std::size_t epoch, std::size_t step) {
  if (options.batch == 0 || options.crop == 0) {
    throw ConfigError("make_batch: batch size and crop must be positive");
  }
  if (!(options.downsample_prob >= 0.0 && options.downsample_prob <= 1.0)) {
    throw ConfigError("make_batch: downsample probability outside [0, 1]");
  }
  const auto order = index.epoch_order(seed, epoch);
  const std::size_t n = index.size();
  Batch batch;
  for (std::size_t j = 0; j < options.batch; ++j) {
    Rng rng(derive_seed(seed, 0x6261746368ull, epoch, step, j));
    std::size_t src = order[(step * options.batch + j) % n];
    std::size_t tries = 0;
    while (!fits(index.image(src), options.crop)) {
      batch.warnings.push_back(index.name(src) + " smaller than crop " +
                               std::to_string(options.crop) + "; resampled");
      if (++tries == n) {
        throw DataError("make_batch: no image is at least " + std::to_string(options.crop) +
                        " pixels on each side");
      }
      src = order[(step * options.batch + j + tries) % n];
    }
    const Tensor* img = &index.image(src);
    Tensor scaled;
    if (rng.uniform() < options.downsample_prob) {
      const double factor = rng.below(2) == 0 ? 1.5 : 2.0;
      const auto h = static_cast<std::size_t>(std::lround(img->dim(0) / factor));
      const auto w = static_cast<std::size_t>(std::lround(img->dim(1) / factor));
      if (h >= options.crop && w >= options.crop) {
        scaled = resize_bilinear(*img, h, w);
        img = &scaled;
      } else {
        batch.warnings.push_back(index.name(src) + " too small after downsampling; kept at full size");
      }
    }
    const std::size_t y0 = rng.below(img->dim(0) - options.crop + 1);
    const std::size_t x0 = rng.below(img->dim(1) - options.crop + 1);
    batch.images.push_back(crop_at(*img, y0, x0, options.crop));
    batch.sources.push_back(src);
  }
  return batch;
}

Tensor synthetic_image(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x73796e7468ull));
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  double base[3], gy[3], gx[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.2, 0.8);
    gy[c] = rng.uniform(-0.3, 0.3);
    gx[c] = rng.uniform(-0.3, 0.3);
  }
  struct Blob {
    double cy, cx, ry, rx, color[3];
  };
  std::vector<Blob> blobs(3 + rng.below(4));
  for (auto& b : blobs) {
    b.cy = rng.uniform(0.0, h);
    b.cx = rng.uniform(0.0, w);
    b.ry = rng.uniform(0.08, 0.35) * h;
    b.rx = rng.uniform(0.08, 0.35) * w;
    for (double& c : b.color) c = rng.uniform();
  }
  const double freq = rng.uniform(0.15, 0.6), angle = rng.uniform(0.0, 3.14159265358979);
  const double stripe = rng.uniform(0.02, 0.08);

  Tensor img({height, width, 3});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      double px[3];
      for (int c = 0; c < 3; ++c) px[c] = base[c] + gy[c] * (fy / h - 0.5) + gx[c] * (fx / w - 0.5);
      for (const auto& b : blobs) {
        const double dy = (fy - b.cy) / b.ry, dx = (fx - b.cx) / b.rx;
        // Logistic edge about two pixels wide.
        const double r = std::sqrt(dy * dy + dx * dx);
        const double a = 1.0 / (1.0 + std::exp((r - 1.0) * std::min(b.ry, b.rx) / 2.0));
        for (int c = 0; c < 3; ++c) px[c] = (1.0 - a) * px[c] + a * b.color[c];
      }
      const double t = stripe * std::sin(freq * (fx * std::cos(angle) + fy * std::sin(angle)));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = px[c] + t + 0.02 * rng.normal();
    }
  }
  return quantize_8bit(img);
}

}  // namespace mkc
