#include "ssdd/dataset.hpp"

#include <cmath>

#include "ssdd/artifact.hpp"
#include "ssdd/rng.hpp"

namespace ssdd {

namespace {

// Two 5x7 bitmap fonts per digit (one row byte per glyph row, bit 4 =
// leftmost column). The second variant set gives each class two shape modes,
// so small random subsets cannot span a class the way the full corpus does.
constexpr uint8_t kDigitFont[2][10][7] = {
    {
        {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0 slashed
        {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1 plain
        {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2 diagonal
        {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3 angular
        {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4 open top
        {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5 round
        {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6 open top
        {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7 plain
        {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8 round
        {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9 curled tail
    },
    {
        {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // 0 oval
        {0x04, 0x0C, 0x14, 0x04, 0x04, 0x04, 0x1F},  // 1 serif
        {0x1E, 0x01, 0x01, 0x06, 0x08, 0x10, 0x1F},  // 2 square
        {0x0E, 0x11, 0x01, 0x06, 0x01, 0x11, 0x0E},  // 3 round
        {0x11, 0x11, 0x11, 0x1F, 0x01, 0x01, 0x01},  // 4 closed
        {0x1F, 0x10, 0x10, 0x1E, 0x01, 0x01, 0x1E},  // 5 square
        {0x0E, 0x11, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6 closed top
        {0x1F, 0x01, 0x02, 0x0E, 0x04, 0x08, 0x10},  // 7 crossbar
        {0x06, 0x09, 0x09, 0x06, 0x09, 0x09, 0x06},  // 8 narrow
        {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x01, 0x01},  // 9 straight tail
    },
};

double glyph_at(int variant, int digit, double row, double col) {
  // bilinear sample of the bitmap, zero outside
  const auto sample = [&](int r, int c) -> double {
    if (r < 0 || r >= 7 || c < 0 || c >= 5) return 0.0;
    return (kDigitFont[variant][digit][r] >> (4 - c)) & 1 ? 1.0 : 0.0;
  };
  const int r0 = static_cast<int>(std::floor(row));
  const int c0 = static_cast<int>(std::floor(col));
  const double tr = row - r0, tc = col - c0;
  return (1 - tr) * ((1 - tc) * sample(r0, c0) + tc * sample(r0, c0 + 1)) +
         tr * ((1 - tc) * sample(r0 + 1, c0) + tc * sample(r0 + 1, c0 + 1));
}

void render_digit(double* out, int hw, int digit, Rng& rng, const DigitsConfig& cfg) {
  const int variant =
      cfg.font_variants > 1 ? static_cast<int>(rng.uniform_int(0, cfg.font_variants - 1)) : 0;
  const bool thick = cfg.stroke_modes > 1 && rng.uniform() < 0.5;
  const double theta = rng.uniform(-cfg.max_rotation, cfg.max_rotation);
  const double scl = rng.uniform(cfg.min_scale, cfg.max_scale);
  const double dx = rng.uniform(-cfg.max_shift, cfg.max_shift);
  const double dy = rng.uniform(-cfg.max_shift, cfg.max_shift);
  const double contrast = rng.uniform(0.75, 1.0);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cx = (hw - 1) / 2.0, cy = (hw - 1) / 2.0;

  for (int i = 0; i < hw; ++i)
    for (int j = 0; j < hw; ++j) {
      // inverse affine map from canvas to glyph coordinates
      const double px = (j - cx - dx) / scl;
      const double py = (i - cy - dy) / scl;
      const double gc = ct * px + st * py + 2.0;   // glyph column center 2.0
      const double gr = -st * px + ct * py + 3.0;  // glyph row center 3.0
      double v = glyph_at(variant, digit, gr, gc);
      if (thick)  // dilate the stroke by sampling a shifted copy as well
        v = std::max({v, glyph_at(variant, digit, gr + 0.45, gc),
                      glyph_at(variant, digit, gr, gc + 0.45)});
      out[i * hw + j] = contrast * v;
    }

  // distractor strokes: nuisance structure a model must learn to ignore
  const auto segments =
      cfg.max_clutter > 0 ? static_cast<int>(rng.uniform_int(0, cfg.max_clutter)) : 0;
  for (int s = 0; s < segments; ++s) {
    const double x0 = rng.uniform(1.0, hw - 2.0);
    const double y0 = rng.uniform(1.0, hw - 2.0);
    const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double len = rng.uniform(4.0, 9.0);
    const double intensity = rng.uniform(0.4, 0.8);
    const double sx = std::cos(angle), sy = std::sin(angle);
    const int steps = static_cast<int>(2.0 * len);
    for (int t = 0; t <= steps; ++t) {
      const double f = static_cast<double>(t) / steps;
      const int pi = static_cast<int>(std::lround(y0 + f * len * sy));
      const int pj = static_cast<int>(std::lround(x0 + f * len * sx));
      if (pi >= 0 && pi < hw && pj >= 0 && pj < hw)
        out[pi * hw + pj] = std::max(out[pi * hw + pj], intensity);
    }
  }

  for (int i = 0; i < hw * hw; ++i)
    out[i] = std::min(1.0, std::max(0.0, out[i] + cfg.noise * rng.normal()));
}

Tensor render_split(int64_t count, const DigitsConfig& cfg, Rng rng, std::vector<int>& labels) {
  const int hw = cfg.image_hw;
  std::vector<double> data(static_cast<size_t>(count * hw * hw));
  labels.resize(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    const int digit = static_cast<int>(i % 10);
    labels[static_cast<size_t>(i)] = digit;
    render_digit(data.data() + i * hw * hw, hw, digit, rng, cfg);
  }
  return Tensor::from_data({count, 1, hw, hw}, std::move(data));
}

}  // namespace

LabeledDataset make_digits(const DigitsConfig& cfg) {
  if (cfg.train_size < 1 || cfg.test_size < 1)
    throw ConfigError("make_digits: split sizes must be positive");
  LabeledDataset data;
  data.classes = 10;
  Rng base(cfg.seed);
  data.train_images = render_split(cfg.train_size, cfg, base.fork(0x11A1), data.train_labels);
  data.test_images = render_split(cfg.test_size, cfg, base.fork(0x7E57), data.test_labels);
  return data;
}

LabeledDataset make_blobs(const BlobsConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("make_blobs: needs at least two classes");
  const int hw = cfg.image_hw;
  LabeledDataset data;
  data.classes = cfg.classes;
  Rng base(cfg.seed);

  auto render = [&](int64_t count, Rng rng, std::vector<int>& labels) {
    std::vector<double> out(static_cast<size_t>(count * hw * hw));
    labels.resize(static_cast<size_t>(count));
    const double r = hw / 4.0, c0 = (hw - 1) / 2.0;
    for (int64_t s = 0; s < count; ++s) {
      const int cls = static_cast<int>(s % cfg.classes);
      labels[static_cast<size_t>(s)] = cls;
      const double angle = 2.0 * 3.14159265358979323846 * cls / cfg.classes;
      const double bx = c0 + r * std::cos(angle) + 0.5 * rng.normal();
      const double by = c0 + r * std::sin(angle) + 0.5 * rng.normal();
      for (int i = 0; i < hw; ++i)
        for (int j = 0; j < hw; ++j) {
          const double d2 = (i - by) * (i - by) + (j - bx) * (j - bx);
          double v = std::exp(-d2 / 3.0) + cfg.noise * rng.normal();
          out[static_cast<size_t>(s * hw * hw + i * hw + j)] =
              std::min(1.0, std::max(0.0, v));
        }
    }
    return Tensor::from_data({count, 1, hw, hw}, std::move(out));
  };
  data.train_images = render(cfg.train_size, base.fork(0x11A1), data.train_labels);
  data.test_images = render(cfg.test_size, base.fork(0x7E57), data.test_labels);
  return data;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data) {
  Container c;
  c.metadata.emplace_back("kind", "dataset");
  c.metadata.emplace_back("classes", std::to_string(data.classes));
  c.add_field("train_images", data.train_images);
  std::vector<double> tl(data.train_labels.begin(), data.train_labels.end());
  const auto tl_count = static_cast<int64_t>(tl.size());
  c.add_field("train_labels", Tensor::from_data({tl_count}, std::move(tl)));
  c.add_field("test_images", data.test_images);
  std::vector<double> sl(data.test_labels.begin(), data.test_labels.end());
  const auto sl_count = static_cast<int64_t>(sl.size());
  c.add_field("test_labels", Tensor::from_data({sl_count}, std::move(sl)));
  write_container(path, c);
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  Container c = read_container(path);
  if (c.require_meta("kind") != "dataset")
    throw IoError("container: expected kind 'dataset', got '" + c.require_meta("kind") + "'");
  LabeledDataset data;
  data.classes = std::stoi(c.require_meta("classes"));
  data.train_images = c.field_tensor("train_images");
  data.test_images = c.field_tensor("test_images");
  for (float v : c.require("train_labels").data) data.train_labels.push_back(static_cast<int>(v));
  for (float v : c.require("test_labels").data) data.test_labels.push_back(static_cast<int>(v));
  for (int lbl : data.train_labels)
    if (lbl < 0 || lbl >= data.classes) throw IoError("dataset: train label out of range");
  for (int lbl : data.test_labels)
    if (lbl < 0 || lbl >= data.classes) throw IoError("dataset: test label out of range");
  return data;
}

}  // namespace ssdd
