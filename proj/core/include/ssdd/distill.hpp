#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <utility>
#include <vector>

#include "ssdd/nn.hpp"
#include "ssdd/optim.hpp"
#include "ssdd/parameterization.hpp"

namespace ssdd {

// Mean over rows of the squared prediction error of head(extractor(xs)).
Tensor inner_loss(const Extractor& extractor, const LinearHead& head, const Tensor& xs,
                  const Tensor& ys);

// Ridge-regression outer objective: the linear head is solved in closed form
// on the distilled features and evaluated on a real batch against the
// teacher's representations. Differentiable through the solve in xs and ys.
//   phi_s = f(xs), K = phi_s phi_s^T
//   loss  = 1/2 || y_teacher - f(x_real) phi_s^T (K + lambda I)^{-1} ys ||_F^2 / b
Tensor krr_outer_loss(const Extractor& extractor, const Tensor& xs, const Tensor& ys,
                      const Tensor& x_real, const Tensor& y_teacher, double lambda);
// Same loss starting from precomputed feature graphs.
Tensor krr_outer_from_features(const Tensor& phi_s, const Tensor& ys, const Tensor& phi_r,
                               const Tensor& y_teacher, double lambda);
// Scale-free ridge level from current feature values (treated as a constant).
double relative_lambda(const Tensor& phi_s, double lambda_rel);

// Differentiable source of the distilled set: leaves plus a generator that
// rebuilds (xs, ys) graphs from their current values.
class DistillModel {
 public:
  virtual ~DistillModel() = default;
  virtual std::vector<Tensor> trainable() = 0;
  virtual std::pair<Tensor, Tensor> generate() const = 0;
  virtual int64_t rows() const = 0;  // m * (A + 1)
};

// Basis/coefficient parameterization with deterministic augmentations.
class BasisDistillModel : public DistillModel {
 public:
  explicit BasisDistillModel(Parameterization param);
  std::vector<Tensor> trainable() override;
  std::pair<Tensor, Tensor> generate() const override;
  int64_t rows() const override;
  Parameterization& param() { return param_; }
  const Parameterization& param() const { return param_; }

 private:
  Parameterization param_;
};

// Raw image/representation pairs optimized directly (no bases, no
// augmentation); the non-parameterized reference pipeline.
class DirectDistillModel : public DistillModel {
 public:
  DirectDistillModel(Tensor xs, Tensor ys);
  std::vector<Tensor> trainable() override;
  std::pair<Tensor, Tensor> generate() const override;
  int64_t rows() const override { return xs_.dim(0); }
  const Tensor& xs() const { return xs_; }
  const Tensor& ys() const { return ys_; }

 private:
  Tensor xs_, ys_;
};

struct PoolConfig {
  int64_t size = 10;       // L
  int64_t max_steps = 40;  // Z
  SgdConfig inner{0.1, 0.9, 0.0};
};

using PoolModelFactory =
    std::function<std::pair<std::unique_ptr<Extractor>, LinearHead>(Rng&)>;

PoolModelFactory convnet_pool_factory(ConvNetConfig arch, int64_t rep_dim);

struct PoolEntry {
  std::unique_ptr<Extractor> extractor;
  LinearHead head;
  std::unique_ptr<Sgd> optimizer;
  int64_t steps = 0;  // z
};

// L partially trained inner models, each carrying its trained-step counter.
// One entry advances per outer iteration: an inner step while below the step
// cap, else a fresh re-initialization.
class ModelPool {
 public:
  ModelPool(PoolModelFactory factory, PoolConfig cfg, uint64_t seed);

  // Trains entry l for its sampled z_l in {1..Z} full-batch steps.
  void init_train(const Tensor& xs, const Tensor& ys);
  int64_t sample_entry(Rng& rng) const;
  void advance(int64_t index, const Tensor& xs, const Tensor& ys);

  const PoolEntry& entry(int64_t i) const { return entries_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(entries_.size()); }
  std::vector<int64_t> step_histogram() const;
  int64_t total_increments() const { return increments_; }
  int64_t total_resets() const { return resets_; }
  const PoolConfig& config() const { return cfg_; }

 private:
  void inner_step(PoolEntry& e, const Tensor& xs, const Tensor& ys);
  PoolEntry make_entry();

  PoolModelFactory factory_;
  PoolConfig cfg_;
  Rng rng_;
  std::vector<PoolEntry> entries_;
  int64_t increments_ = 0;
  int64_t resets_ = 0;
};

struct DistillConfig {
  int64_t outer_iterations = 300;
  AdamWConfig outer{1e-3, 0.9, 0.999, 1e-8, 0.0};
  Schedule outer_schedule = Schedule::LinearDecay;
  PoolConfig pool;
  double lambda = 0.0;       // > 0 pins the ridge level
  double lambda_rel = 1e-6;  // otherwise lambda = lambda_rel * trace(K) / n_s
  int64_t real_batch = 64;
  uint64_t seed = 1;
  int64_t log_every = 25;
};

struct DistillStepStats {
  double outer_loss = 0.0;
  int64_t entry = 0;
  bool reset = false;
  double lambda = 0.0;
};

// Drives the outer/inner alternation over any DistillModel. Teacher
// representations for the full real set are precomputed by the caller.
class DistillEngine {
 public:
  DistillEngine(std::shared_ptr<DistillModel> model, Tensor real_images, Tensor teacher_reps,
                ModelPool pool, DistillConfig cfg);

  void pool_init();
  DistillStepStats step();
  void run(std::ostream* progress = nullptr);

  const ModelPool& pool() const { return pool_; }
  ModelPool& pool() { return pool_; }
  const std::vector<double>& loss_trace() const { return loss_trace_; }
  int64_t iterations_done() const { return iter_; }

 private:
  std::shared_ptr<DistillModel> model_;
  Tensor real_images_;
  Tensor teacher_reps_;
  ModelPool pool_;
  DistillConfig cfg_;
  AdamW outer_opt_;
  Rng step_rng_;
  int64_t iter_ = 0;
  std::vector<double> loss_trace_;
};

struct DistillResult {
  Parameterization param;
  std::vector<double> outer_loss_trace;
  int64_t pool_increments = 0;
  int64_t pool_resets = 0;
};

// Pool warm-up + the full outer loop over an existing parameterization.
DistillResult distill_parameterization(Parameterization param, const Tensor& images,
                                       const Tensor& teacher_reps,
                                       const ConvNetConfig& inner_arch, const DistillConfig& cfg,
                                       std::ostream* progress = nullptr);

// Initialization + pool warm-up + the full outer loop; approximation networks
// are trained separately afterwards. `teacher_reps` may carry precomputed
// representations of `images` to skip one teacher pass.
DistillResult run_distillation(const Tensor& images, const TeacherModel& teacher,
                               const InitConfig& init_cfg, const StorageBudget& budget,
                               const ConvNetConfig& inner_arch, const DistillConfig& cfg,
                               std::ostream* progress = nullptr,
                               const Tensor* teacher_reps = nullptr);

}  // namespace ssdd
