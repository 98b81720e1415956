#include "ssdd/nn.hpp"

#include <algorithm>
#include <cmath>

#include "ssdd/optim.hpp"

namespace ssdd {

int default_convnet_depth(int image_hw) {
  int depth = 3;
  for (int hw = 32; hw * 2 <= image_hw; hw *= 2) ++depth;
  return depth;
}

namespace {

Tensor he_conv(int out_c, int in_c, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * 9));
  return Tensor::randn({out_c, in_c, 3, 3}, rng, stddev, true);
}

Tensor he_linear(int64_t in_dim, int64_t out_dim, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
  return Tensor::randn({in_dim, out_dim}, rng, stddev, true);
}

}  // namespace

ConvNetExtractor::ConvNetExtractor(ConvNetConfig cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.depth < 1) throw ConfigError("convnet: depth must be >= 1");
  int hw = cfg_.image_hw;
  int prev = cfg_.in_channels;
  for (int b = 0; b < cfg_.depth; ++b) {
    if (hw % 2 != 0)
      throw ConfigError("convnet: image size " + std::to_string(cfg_.image_hw) +
                        " does not survive " + std::to_string(cfg_.depth) + " pooling stages");
    conv_w_.push_back(he_conv(cfg_.width, prev, rng));
    bn_gamma_.push_back(Tensor::full({cfg_.width}, 1.0, true));
    bn_beta_.push_back(Tensor::zeros({cfg_.width}, true));
    prev = cfg_.width;
    hw /= 2;
  }
}

Tensor ConvNetExtractor::forward(const Tensor& images) const {
  Tensor h = images;
  for (int b = 0; b < cfg_.depth; ++b) {
    h = conv2d(h, conv_w_[static_cast<size_t>(b)], 1);
    h = batchnorm2d(h, bn_gamma_[static_cast<size_t>(b)], bn_beta_[static_cast<size_t>(b)]);
    h = relu(h);
    h = avgpool2d(h, 2);
  }
  return reshape(h, {h.dim(0), feature_dim()});
}

Tensor ConvNetExtractor::forward_fixed(const Tensor& images,
                                       const std::vector<BnStats>& stats) const {
  if (static_cast<int>(stats.size()) != cfg_.depth)
    throw ContractError("convnet: one statistics record per block required");
  Tensor h = images;
  for (int b = 0; b < cfg_.depth; ++b) {
    h = conv2d(h, conv_w_[static_cast<size_t>(b)], 1);
    h = batchnorm2d_fixed(h, bn_gamma_[static_cast<size_t>(b)], bn_beta_[static_cast<size_t>(b)],
                          stats[static_cast<size_t>(b)].mean, stats[static_cast<size_t>(b)].var);
    h = relu(h);
    h = avgpool2d(h, 2);
  }
  return reshape(h, {h.dim(0), feature_dim()});
}

std::vector<Tensor> ConvNetExtractor::parameters() const {
  std::vector<Tensor> out;
  for (int b = 0; b < cfg_.depth; ++b) {
    out.push_back(conv_w_[static_cast<size_t>(b)]);
    out.push_back(bn_gamma_[static_cast<size_t>(b)]);
    out.push_back(bn_beta_[static_cast<size_t>(b)]);
  }
  return out;
}

int64_t ConvNetExtractor::feature_dim() const {
  int64_t hw = cfg_.image_hw;
  for (int b = 0; b < cfg_.depth; ++b) hw /= 2;
  return static_cast<int64_t>(cfg_.width) * hw * hw;
}

std::unique_ptr<Extractor> ConvNetExtractor::clone() const {
  Rng dummy(0);
  auto copy = std::make_unique<ConvNetExtractor>(cfg_, dummy);
  for (size_t b = 0; b < conv_w_.size(); ++b) {
    copy->conv_w_[b] = conv_w_[b].detach(true);
    copy->bn_gamma_[b] = bn_gamma_[b].detach(true);
    copy->bn_beta_[b] = bn_beta_[b].detach(true);
  }
  return copy;
}

std::vector<BnStats> ConvNetExtractor::compute_bn_stats(const Tensor& images,
                                                        int64_t chunk) const {
  const int64_t n = images.dim(0);
  std::vector<BnStats> stats;
  for (int b = 0; b < cfg_.depth; ++b) {
    // pre-activation moments of block b with blocks < b pinned
    std::vector<double> sum(static_cast<size_t>(cfg_.width), 0.0);
    std::vector<double> sumsq(static_cast<size_t>(cfg_.width), 0.0);
    int64_t count = 0;
    for (int64_t begin = 0; begin < n; begin += chunk) {
      const int64_t end = std::min(n, begin + chunk);
      std::vector<int64_t> idx(static_cast<size_t>(end - begin));
      for (int64_t i = begin; i < end; ++i) idx[static_cast<size_t>(i - begin)] = i;
      Tensor h = take_rows(images, idx);
      for (int p = 0; p < b; ++p) {
        h = conv2d(h, conv_w_[static_cast<size_t>(p)], 1);
        h = batchnorm2d_fixed(h, bn_gamma_[static_cast<size_t>(p)],
                              bn_beta_[static_cast<size_t>(p)], stats[static_cast<size_t>(p)].mean,
                              stats[static_cast<size_t>(p)].var);
        h = relu(h);
        h = avgpool2d(h, 2);
      }
      h = conv2d(h, conv_w_[static_cast<size_t>(b)], 1);
      const auto hd = h.data();
      const int64_t rows = h.dim(0), plane = h.dim(2) * h.dim(3);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cfg_.width; ++c) {
          const double* p = hd.data() + (r * cfg_.width + c) * plane;
          for (int64_t i = 0; i < plane; ++i) {
            sum[static_cast<size_t>(c)] += p[i];
            sumsq[static_cast<size_t>(c)] += p[i] * p[i];
          }
        }
      count += rows * plane;
    }
    BnStats st;
    st.mean.resize(static_cast<size_t>(cfg_.width));
    st.var.resize(static_cast<size_t>(cfg_.width));
    for (int c = 0; c < cfg_.width; ++c) {
      const double mu = sum[static_cast<size_t>(c)] / static_cast<double>(count);
      st.mean[static_cast<size_t>(c)] = mu;
      st.var[static_cast<size_t>(c)] =
          std::max(0.0, sumsq[static_cast<size_t>(c)] / static_cast<double>(count) - mu * mu);
    }
    stats.push_back(std::move(st));
  }
  return stats;
}

MlpExtractor::MlpExtractor(MlpExtractorConfig cfg, Rng& rng) : cfg_(cfg) {
  w1_ = he_linear(cfg_.in_dim, cfg_.hidden, rng);
  b1_ = Tensor::zeros({cfg_.hidden}, true);
  w2_ = he_linear(cfg_.hidden, cfg_.out_dim, rng);
  b2_ = Tensor::zeros({cfg_.out_dim}, true);
}

Tensor MlpExtractor::forward(const Tensor& images) const {
  Tensor flat = reshape(images, {images.dim(0), images.numel() / images.dim(0)});
  if (flat.dim(1) != cfg_.in_dim)
    throw ShapeError("mlp extractor: expects flattened dim " + std::to_string(cfg_.in_dim) +
                     ", got " + std::to_string(flat.dim(1)));
  return linear(relu(linear(flat, w1_, b1_)), w2_, b2_);
}

std::vector<Tensor> MlpExtractor::parameters() const { return {w1_, b1_, w2_, b2_}; }

std::unique_ptr<Extractor> MlpExtractor::clone() const {
  Rng dummy(0);
  auto copy = std::make_unique<MlpExtractor>(cfg_, dummy);
  copy->w1_ = w1_.detach(true);
  copy->b1_ = b1_.detach(true);
  copy->w2_ = w2_.detach(true);
  copy->b2_ = b2_.detach(true);
  return copy;
}

LinearHead::LinearHead(int64_t in_dim, int64_t out_dim, Rng& rng) {
  weight = Tensor::randn({in_dim, out_dim}, rng, 1.0 / std::sqrt(static_cast<double>(in_dim)),
                         true);
}

Mlp2::Mlp2(int64_t in_dim, int64_t hidden, int64_t out_dim, Rng& rng) {
  w1 = he_linear(in_dim, hidden, rng);
  b1 = Tensor::zeros({hidden}, true);
  w2 = he_linear(hidden, out_dim, rng);
  b2 = Tensor::zeros({out_dim}, true);
}

Tensor Mlp2::forward(const Tensor& x) const { return linear(relu(linear(x, w1, b1)), w2, b2); }

std::vector<Tensor> Mlp2::parameters() const { return {w1, b1, w2, b2}; }

Tensor barlow_twins_loss(const Tensor& z1, const Tensor& z2, double off_diag_weight) {
  if (z1.ndim() != 2 || z2.ndim() != 2 || z1.shape() != z2.shape())
    throw ShapeError("barlow_twins_loss: views must share [b,d], got " + shape_str(z1.shape()) +
                     " vs " + shape_str(z2.shape()));
  const int64_t b = z1.dim(0), d = z1.dim(1);
  if (b < 2) throw ContractError("barlow_twins_loss: batch of " + std::to_string(b) +
                                 " has undefined column statistics");
  auto standardize = [](const Tensor& z) {
    Tensor centered = sub_rowvec(z, mean_rows(z));
    Tensor std_cols = sqrt_elem(mean_rows(square(centered)), 1e-24);
    return div_rowvec(centered, std_cols);
  };
  Tensor c = scale(matmul(transpose(standardize(z1)), standardize(z2)),
                   1.0 / static_cast<double>(b));
  Tensor eye = Tensor::identity(d);
  Tensor diag_err = sub(eye, mul(c, eye));
  Tensor off = mul(c, add_scalar(scale(eye, -1.0), 1.0));
  return add(sum(square(diag_err)), scale(sum(square(off)), off_diag_weight));
}

TeacherModel::TeacherModel(const TeacherConfig& cfg, Rng& rng) : cfg_(cfg) {
  backbone_ = std::make_shared<ConvNetExtractor>(cfg.backbone, rng);
  neck_w_ = he_linear(backbone_->feature_dim(), cfg.rep_dim, rng);
  neck_b_ = Tensor::zeros({cfg.rep_dim}, true);
  const int64_t proj_hidden = cfg.rep_dim * cfg.proj_hidden_mult;
  proj_ = Mlp2(cfg.rep_dim, proj_hidden, proj_hidden, rng);
}

Tensor TeacherModel::train_representations(const Tensor& images) const {
  return linear(backbone_->forward(images), neck_w_, neck_b_);
}

Tensor TeacherModel::representations(const Tensor& images, int64_t chunk) const {
  if (!frozen_) throw ContractError("teacher: representations requested before freeze");
  const int64_t n = images.dim(0);
  std::vector<Tensor> parts;
  for (int64_t begin = 0; begin < n; begin += chunk) {
    const int64_t end = std::min(n, begin + chunk);
    std::vector<int64_t> idx(static_cast<size_t>(end - begin));
    for (int64_t i = begin; i < end; ++i) idx[static_cast<size_t>(i - begin)] = i;
    Tensor feats = backbone_->forward_fixed(take_rows(images, idx), bn_stats_);
    parts.push_back(linear(feats, neck_w_, neck_b_).detach());
  }
  return parts.size() == 1 ? parts[0] : concat_rows(parts);
}

std::vector<Tensor> TeacherModel::parameters() const {
  auto out = backbone_->parameters();
  out.push_back(neck_w_);
  out.push_back(neck_b_);
  for (const auto& p : proj_.parameters()) out.push_back(p);
  return out;
}

void TeacherModel::set_frozen() {
  for (auto p : parameters()) p.set_requires_grad(false);
  frozen_ = true;
}

void TeacherModel::freeze(const Tensor& dataset_images) {
  bn_stats_ = backbone_->compute_bn_stats(dataset_images);
  set_frozen();
}

namespace {

// Two-view pipeline for teacher training: zero-padded shifted crop plus
// horizontal flip, randomized per image.
Tensor random_crop_flip(const Tensor& batch, Rng& rng, int pad, bool hflip) {
  const int64_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::vector<double> out(static_cast<size_t>(batch.numel()), 0.0);
  const auto src = batch.data();
  for (int64_t r = 0; r < n; ++r) {
    const int64_t dy = rng.uniform_int(-pad, pad);
    const int64_t dx = rng.uniform_int(-pad, pad);
    const bool flip = hflip && rng.uniform() < 0.5;
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* sp = src.data() + (r * c + ch) * h * w;
      double* dp = out.data() + (r * c + ch) * h * w;
      for (int64_t i = 0; i < h; ++i) {
        const int64_t si = i + dy;
        if (si < 0 || si >= h) continue;
        for (int64_t j = 0; j < w; ++j) {
          const int64_t sj = (flip ? w - 1 - j : j) + dx;
          if (sj < 0 || sj >= w) continue;
          dp[i * w + j] = sp[si * w + sj];
        }
      }
    }
  }
  return Tensor::from_data(batch.shape(), std::move(out));
}

}  // namespace

TeacherModel train_teacher(const Tensor& images, const TeacherConfig& cfg, TeacherTrainLog* log) {
  if (images.ndim() != 4 || images.dim(0) < 2)
    throw ContractError("train_teacher: needs a [n>=2,c,h,w] dataset");
  const int64_t n = images.dim(0);
  Rng rng(cfg.seed);
  TeacherModel teacher(cfg, rng);

  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW opt(teacher.parameters(), opt_cfg);

  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (int64_t begin = 0; begin + 2 <= n; begin += cfg.batch_size) {
      const int64_t end = std::min(n, begin + cfg.batch_size);
      if (end - begin < 2) break;
      std::span<const int64_t> idx(order.data() + begin, static_cast<size_t>(end - begin));
      Tensor batch = take_rows(images, idx);
      Tensor v1 = random_crop_flip(batch, rng, cfg.crop_pad, cfg.hflip);
      Tensor v2 = random_crop_flip(batch, rng, cfg.crop_pad, cfg.hflip);
      Tensor z1 = teacher.projector().forward(teacher.train_representations(v1));
      Tensor z2 = teacher.projector().forward(teacher.train_representations(v2));
      Tensor loss = barlow_twins_loss(z1, z2, cfg.off_diag_weight);
      if (!all_finite(loss))
        throw NumericError("train_teacher: loss diverged at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches));
      opt.zero_grad();
      backward(loss);
      opt.step();
      epoch_loss += loss.item();
      ++batches;
    }
    if (log) log->epoch_loss.push_back(epoch_loss / std::max<int64_t>(1, batches));
  }

  teacher.freeze(images);
  return teacher;
}

Tensor featurize_chunked(const Extractor& extractor, const Tensor& images, int64_t chunk) {
  const int64_t n = images.dim(0);
  if (n == 1) throw ContractError("featurize_chunked: a single image has no batch statistics");
  std::vector<Tensor> parts;
  for (int64_t begin = 0; begin < n; begin += chunk) {
    int64_t end = std::min(n, begin + chunk);
    if (n - end == 1) end = n;  // fold a lone trailing sample into this chunk
    std::vector<int64_t> idx(static_cast<size_t>(end - begin));
    for (int64_t i = begin; i < end; ++i) idx[static_cast<size_t>(i - begin)] = i;
    parts.push_back(extractor.forward(take_rows(images, idx)).detach());
    if (end == n) break;
  }
  return parts.size() == 1 ? parts[0] : concat_rows(parts);
}

}  // namespace ssdd
