#include "ssdd/augment.hpp"

#include <cmath>

namespace ssdd {

const char* transform_name(TransformKind kind) {
  switch (kind) {
    case TransformKind::Rotate90: return "rotate90";
    case TransformKind::Rotate180: return "rotate180";
    case TransformKind::Rotate270: return "rotate270";
    case TransformKind::JigsawLeftRight: return "jigsaw_lr";
    case TransformKind::JigsawTopBottom: return "jigsaw_tb";
    case TransformKind::JigsawBoth: return "jigsaw_both";
    case TransformKind::CropTopLeft: return "crop_tl";
    case TransformKind::CropTopRight: return "crop_tr";
    case TransformKind::CropBottomLeft: return "crop_bl";
    case TransformKind::CropBottomRight: return "crop_br";
    case TransformKind::CropCenter: return "crop_center";
  }
  return "unknown";
}

TransformKind transform_from_name(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(TransformKind::CropCenter); ++k)
    if (name == transform_name(static_cast<TransformKind>(k)))
      return static_cast<TransformKind>(k);
  throw ConfigError("unknown transform name: " + name);
}

AugmentationSpec rotation_spec() {
  return {{{TransformKind::Rotate90}, {TransformKind::Rotate180}, {TransformKind::Rotate270}}};
}

AugmentationSpec jigsaw_spec() {
  return {{{TransformKind::JigsawLeftRight},
           {TransformKind::JigsawTopBottom},
           {TransformKind::JigsawBoth}}};
}

int default_crop_side(int image_hw) {
  return static_cast<int>(std::lround(20.0 / 32.0 * image_hw));
}

AugmentationSpec crop_spec(int image_hw) {
  const int side = default_crop_side(image_hw);
  return {{{TransformKind::CropTopLeft, side},
           {TransformKind::CropTopRight, side},
           {TransformKind::CropBottomLeft, side},
           {TransformKind::CropBottomRight, side},
           {TransformKind::CropCenter, side}}};
}

AugmentationSpec spec_by_name(const std::string& name, int image_hw) {
  if (name == "rotation") return rotation_spec();
  if (name == "jigsaw") return jigsaw_spec();
  if (name == "crop") return crop_spec(image_hw);
  if (name == "none") return {};
  throw ConfigError("unknown augmentation family: " + name +
                    " (expected rotation|jigsaw|crop|none)");
}

namespace {

bool is_crop(TransformKind k) {
  return k == TransformKind::CropTopLeft || k == TransformKind::CropTopRight ||
         k == TransformKind::CropBottomLeft || k == TransformKind::CropBottomRight ||
         k == TransformKind::CropCenter;
}

void validate_transform(const Transform& t, int64_t h, int64_t w) {
  switch (t.kind) {
    case TransformKind::Rotate90:
    case TransformKind::Rotate180:
    case TransformKind::Rotate270:
      if (h != w)
        throw ContractError(std::string(transform_name(t.kind)) +
                            ": rotation needs square images, got " + std::to_string(h) + "x" +
                            std::to_string(w));
      return;
    case TransformKind::JigsawLeftRight:
    case TransformKind::JigsawTopBottom:
    case TransformKind::JigsawBoth:
      if (h % 2 != 0 || w % 2 != 0)
        throw ContractError(std::string(transform_name(t.kind)) +
                            ": quadrant swap needs even sides, got " + std::to_string(h) + "x" +
                            std::to_string(w));
      return;
    default:
      if (t.crop_side < 1 || t.crop_side > std::min(h, w))
        throw ContractError(std::string(transform_name(t.kind)) + ": crop side " +
                            std::to_string(t.crop_side) + " outside [1," +
                            std::to_string(std::min(h, w)) + "]");
      return;
  }
}

// Per-sample gather map for a pixel permutation over (c,h,w).
std::vector<int64_t> permutation_map(TransformKind kind, int64_t c, int64_t h, int64_t w) {
  std::vector<int64_t> map(static_cast<size_t>(c * h * w));
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        int64_t si = i, sj = j;
        switch (kind) {
          case TransformKind::Rotate90:  // out[i][j] = in[h-1-j][i]
            si = h - 1 - j;
            sj = i;
            break;
          case TransformKind::Rotate180:
            si = h - 1 - i;
            sj = w - 1 - j;
            break;
          case TransformKind::Rotate270:
            si = j;
            sj = w - 1 - i;
            break;
          case TransformKind::JigsawLeftRight:
            sj = (j + w / 2) % w;
            break;
          case TransformKind::JigsawTopBottom:
            si = (i + h / 2) % h;
            break;
          case TransformKind::JigsawBoth:
            si = (i + h / 2) % h;
            sj = (j + w / 2) % w;
            break;
          default:
            break;
        }
        map[static_cast<size_t>((ch * h + i) * w + j)] = (ch * h + si) * w + sj;
      }
  return map;
}

std::vector<int64_t> crop_map(TransformKind kind, int64_t c, int64_t h, int64_t w, int64_t side) {
  int64_t ti = 0, tj = 0;
  switch (kind) {
    case TransformKind::CropTopLeft: break;
    case TransformKind::CropTopRight: tj = w - side; break;
    case TransformKind::CropBottomLeft: ti = h - side; break;
    case TransformKind::CropBottomRight: ti = h - side; tj = w - side; break;
    default: ti = (h - side) / 2; tj = (w - side) / 2; break;
  }
  std::vector<int64_t> map(static_cast<size_t>(c * side * side));
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < side; ++i)
      for (int64_t j = 0; j < side; ++j)
        map[static_cast<size_t>((ch * side + i) * side + j)] =
            (ch * h + ti + i) * w + tj + j;
  return map;
}

}  // namespace

void validate_spec(const AugmentationSpec& spec, int64_t h, int64_t w) {
  for (const auto& t : spec.transforms) validate_transform(t, h, w);
}

Tensor apply_transform(const Transform& t, const Tensor& x) {
  if (x.ndim() != 4)
    throw ShapeError("apply_transform: expects [n,c,h,w], got " + shape_str(x.shape()));
  const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  validate_transform(t, h, w);
  if (!is_crop(t.kind))
    return gather_sample_elems(x, {c, h, w}, permutation_map(t.kind, c, h, w));
  const int64_t side = t.crop_side;
  Tensor cropped = gather_sample_elems(x, {c, side, side}, crop_map(t.kind, c, h, w, side));
  return bilinear_resize(cropped, h, w);
}

Tensor expand_batch(const Tensor& x, const AugmentationSpec& spec) {
  if (x.ndim() != 4)
    throw ShapeError("expand_batch: expects [n,c,h,w], got " + shape_str(x.shape()));
  validate_spec(spec, x.dim(2), x.dim(3));
  if (spec.transforms.empty()) return x;
  std::vector<Tensor> blocks;
  blocks.reserve(spec.transforms.size() + 1);
  blocks.push_back(x);
  for (const auto& t : spec.transforms) blocks.push_back(apply_transform(t, x));
  return concat_rows(blocks);
}

}  // namespace ssdd
