#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssdd/rng.hpp"
#include "ssdd/tensor.hpp"

namespace ssdd {

// conv3x3 -> batchnorm -> relu -> avgpool2 blocks, flattened at the end.
struct ConvNetConfig {
  int in_channels = 1;
  int image_hw = 16;
  int depth = 3;
  int width = 32;
};

// 3 blocks for 32x32 inputs, one more per doubling, never fewer than 3.
int default_convnet_depth(int image_hw);

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual Tensor forward(const Tensor& images) const = 0;  // [n,c,h,w] -> [n,d_f]
  virtual std::vector<Tensor> parameters() const = 0;
  virtual int64_t feature_dim() const = 0;
  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Extractor> clone() const = 0;
};

// Per-channel statistics of one batchnorm layer, captured at freeze time.
struct BnStats {
  std::vector<double> mean;
  std::vector<double> var;
};

class ConvNetExtractor : public Extractor {
 public:
  ConvNetExtractor(ConvNetConfig cfg, Rng& rng);

  Tensor forward(const Tensor& images) const override;  // batch statistics
  // Same stack with pinned normalization statistics (frozen teachers).
  Tensor forward_fixed(const Tensor& images, const std::vector<BnStats>& stats) const;
  std::vector<Tensor> parameters() const override;
  int64_t feature_dim() const override;
  std::string kind() const override { return "convnet"; }
  std::unique_ptr<Extractor> clone() const override;

  const ConvNetConfig& config() const { return cfg_; }
  // Population statistics of every batchnorm layer over `images`, computed
  // block by block with earlier blocks already pinned.
  std::vector<BnStats> compute_bn_stats(const Tensor& images, int64_t chunk = 512) const;

 private:
  ConvNetConfig cfg_;
  std::vector<Tensor> conv_w_;  // [width, prev, 3, 3]
  std::vector<Tensor> bn_gamma_, bn_beta_;
};

struct MlpExtractorConfig {
  int64_t in_dim = 256;
  int64_t hidden = 128;
  int64_t out_dim = 64;
};

// Flatten -> affine -> relu -> affine. The unseen-architecture stand-in.
class MlpExtractor : public Extractor {
 public:
  MlpExtractor(MlpExtractorConfig cfg, Rng& rng);
  Tensor forward(const Tensor& images) const override;
  std::vector<Tensor> parameters() const override;
  int64_t feature_dim() const override { return cfg_.out_dim; }
  std::string kind() const override { return "mlp"; }
  std::unique_ptr<Extractor> clone() const override;

 private:
  MlpExtractorConfig cfg_;
  Tensor w1_, b1_, w2_, b2_;
};

// Bias-free linear map on top of extractor features; the closed-form ridge
// solution applies to exactly this parameter.
struct LinearHead {
  Tensor weight;  // [d_f, d_y]
  LinearHead() = default;
  LinearHead(int64_t in_dim, int64_t out_dim, Rng& rng);
  Tensor forward(const Tensor& feats) const { return matmul(feats, weight); }
};

// Two affine layers with a ReLU between them.
struct Mlp2 {
  Tensor w1, b1, w2, b2;
  Mlp2() = default;
  Mlp2(int64_t in_dim, int64_t hidden, int64_t out_dim, Rng& rng);
  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

// Cross-correlation redundancy-reduction loss between two views. Columns of
// z1/z2 are standardized internally, so the loss is invariant to per-column
// affine rescaling of its inputs.
Tensor barlow_twins_loss(const Tensor& z1, const Tensor& z2, double off_diag_weight);

struct TeacherConfig {
  ConvNetConfig backbone{1, 16, 3, 32};
  int64_t rep_dim = 32;  // d_y
  int proj_hidden_mult = 4;
  int epochs = 10;
  int64_t batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double off_diag_weight = 5e-3;
  int crop_pad = 4;   // two views: shifted crop with this padding + optional h-flip
  bool hflip = true;  // mirror half the views
  uint64_t seed = 1;
};

struct TeacherTrainLog {
  std::vector<double> epoch_loss;
};

// Frozen image -> representation map. Normalization statistics are pinned at
// freeze time so representations are a pure per-image function.
class TeacherModel {
 public:
  TeacherModel() = default;
  TeacherModel(const TeacherConfig& cfg, Rng& rng);

  Tensor representations(const Tensor& images, int64_t chunk = 512) const;
  int64_t rep_dim() const { return cfg_.rep_dim; }
  bool frozen() const { return frozen_; }
  const TeacherConfig& config() const { return cfg_; }

  // Training-time pieces, exposed for train_teacher and checkpointing.
  ConvNetExtractor& backbone() { return *backbone_; }
  const ConvNetExtractor& backbone() const { return *backbone_; }
  Tensor train_representations(const Tensor& images) const;  // batch statistics
  Mlp2& projector() { return proj_; }
  const Mlp2& projector() const { return proj_; }
  std::vector<Tensor> parameters() const;
  void freeze(const Tensor& dataset_images);
  const std::vector<BnStats>& bn_stats() const { return bn_stats_; }
  Tensor& neck_w() { return neck_w_; }
  Tensor& neck_b() { return neck_b_; }
  void restore(std::vector<BnStats> stats) {  // checkpoint load path
    bn_stats_ = std::move(stats);
    set_frozen();
  }

 private:
  void set_frozen();

  TeacherConfig cfg_;
  std::shared_ptr<ConvNetExtractor> backbone_;
  Tensor neck_w_, neck_b_;  // backbone features -> rep_dim
  Mlp2 proj_;
  std::vector<BnStats> bn_stats_;
  bool frozen_ = false;
};

TeacherModel train_teacher(const Tensor& images, const TeacherConfig& cfg,
                           TeacherTrainLog* log = nullptr);

// Extractor features over fixed-size chunks (tail folded so chunks stay >= 2);
// deterministic for a fixed chunk size.
Tensor featurize_chunked(const Extractor& extractor, const Tensor& images, int64_t chunk = 512);

}  // namespace ssdd
