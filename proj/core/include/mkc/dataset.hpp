#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mkc/tensor.hpp"

namespace mkc {

// A small in-memory image collection. Desk-scale datasets fit in memory, so
// images are decoded once when the index is built.
class DatasetIndex {
 public:
  // Every .png / .ppm file directly inside `dir`, sorted by file name.
  static DatasetIndex from_directory(const std::string& dir);
  static DatasetIndex from_images(std::vector<Tensor> images,
                                  std::vector<std::string> names = {});

  std::size_t size() const { return images_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& image(std::size_t i) const { return images_[i]; }

  // Deterministic permutation of [0, size()) for (seed, epoch).
  std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> images_;
};

struct BatchOptions {
  std::size_t batch = 8;
  std::size_t crop = 64;
  double downsample_prob = 0.3;  // bilinear downscale by 1.5 or 2 before cropping
};

struct Batch {
  std::vector<Tensor> images;  // each [crop, crop, 3]
  std::vector<std::size_t> sources;
  std::vector<std::string> warnings;

  // [batch, crop, crop, 3]
  Tensor stacked() const;
};

// Random crops (with optional downsampling) of the images visited at
// (epoch, step), fully determined by (seed, epoch, step). An augmentation
// that leaves the image smaller than the crop is dropped with a warning; an
// image that is itself too small is replaced by the next usable one, also
// with a warning. Throws DataError if no image can supply the crop.
Batch make_batch(const DatasetIndex& index, const BatchOptions& options, std::uint64_t seed,
                 std::size_t epoch, std::size_t step);

// Bilinear resize with half-pixel centres.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// Replicates the last row/column so both extents become multiples of `multiple`.
Tensor pad_edge(const Tensor& image, std::size_t multiple);
Tensor crop_top_left(const Tensor& image, std::size_t height, std::size_t width);

// Deterministic stand-in for a natural photo: a smooth colour ramp overlaid
// with soft-edged blobs, a striped texture and light noise, on the 8-bit grid.
Tensor synthetic_image(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace mkc
