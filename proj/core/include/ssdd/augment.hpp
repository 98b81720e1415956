#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssdd/tensor.hpp"

namespace ssdd {

enum class TransformKind {
  Rotate90,
  Rotate180,
  Rotate270,
  JigsawLeftRight,
  JigsawTopBottom,
  JigsawBoth,
  CropTopLeft,
  CropTopRight,
  CropBottomLeft,
  CropBottomRight,
  CropCenter,
};

// One deterministic, differentiable image transform. Rotations and jigsaw
// swaps are pure pixel permutations; crops resample through a bilinear resize
// back to the input resolution.
struct Transform {
  TransformKind kind;
  int crop_side = 0;  // crops only
};

struct AugmentationSpec {
  std::vector<Transform> transforms;
  int64_t count() const { return static_cast<int64_t>(transforms.size()); }
};

const char* transform_name(TransformKind kind);
TransformKind transform_from_name(const std::string& name);

// The three fixed rotations; the library default.
AugmentationSpec rotation_spec();
// Quadrant swaps: left-right, top-bottom, both.
AugmentationSpec jigsaw_spec();
// Four corners plus center at the resolution-scaled crop side.
AugmentationSpec crop_spec(int image_hw);
int default_crop_side(int image_hw);

AugmentationSpec spec_by_name(const std::string& name, int image_hw);  // rotation|jigsaw|crop|none

// Preconditions per transform (squareness, even sides, crop fits).
void validate_spec(const AugmentationSpec& spec, int64_t h, int64_t w);

// Applies one transform to an NCHW batch; gradient flows to x.
Tensor apply_transform(const Transform& t, const Tensor& x);

// [x | t1(x) | ... | tA(x)] stacked along rows, each block in sample order.
Tensor expand_batch(const Tensor& x, const AugmentationSpec& spec);

}  // namespace ssdd
