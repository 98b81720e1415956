#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssdd/parameterization.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

struct LabeledDataset {
  Tensor train_images;  // [n,c,h,w], values in [0,1]
  std::vector<int> train_labels;
  Tensor test_images;
  std::vector<int> test_labels;
  int classes = 10;
  ImageGeom geom() const {
    return {train_images.dim(1), train_images.dim(2), train_images.dim(3)};
  }
};

// Procedurally rendered digit glyphs: a 5x7 bitmap font pushed through a
// random affine map (shift, rotation, scale) with contrast jitter and pixel
// noise. Deterministic per seed; train/test use disjoint generator streams.
struct DigitsConfig {
  int64_t train_size = 5000;
  int64_t test_size = 1000;
  int image_hw = 16;
  uint64_t seed = 7;
  double noise = 0.12;
  double max_rotation = 0.35;  // radians
  double min_scale = 1.5;
  double max_scale = 2.1;
  double max_shift = 2.0;  // pixels
  int font_variants = 2;   // shape modes per class (1 or 2)
  int max_clutter = 2;     // distractor strokes per image, drawn uniformly from [0, max]
  int stroke_modes = 2;    // 2 adds a thick-stroke mode per glyph
};

LabeledDataset make_digits(const DigitsConfig& cfg);

// Gaussian bumps at class-specific positions; the fast CI stand-in.
struct BlobsConfig {
  int64_t train_size = 256;
  int64_t test_size = 64;
  int image_hw = 8;
  int classes = 4;
  uint64_t seed = 7;
  double noise = 0.1;
};

LabeledDataset make_blobs(const BlobsConfig& cfg);

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace ssdd
