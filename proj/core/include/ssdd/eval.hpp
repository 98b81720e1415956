#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssdd/approx.hpp"
#include "ssdd/artifact.hpp"
#include "ssdd/dataset.hpp"
#include "ssdd/distill.hpp"
#include "ssdd/nn.hpp"

namespace ssdd {

struct ArchConfig {
  std::string kind = "convnet";  // convnet | mlp
  ConvNetConfig convnet;
  MlpExtractorConfig mlp;
};

std::unique_ptr<Extractor> make_extractor(const ArchConfig& arch, Rng& rng);

struct PretrainConfig {
  int epochs = 300;
  int64_t batch_size = 256;
  SgdConfig sgd{0.1, 0.9, 1e-3};
  uint64_t seed = 1;
};

struct PretrainLog {
  std::vector<double> epoch_mse;
};

// Regression pretraining of an extractor (+ disposable linear output) on
// image/representation pairs; returns the extractor with the head removed.
std::unique_ptr<Extractor> pretrain_on_pairs(const Tensor& images, const Tensor& reps,
                                             const ArchConfig& arch, const PretrainConfig& cfg,
                                             PretrainLog* log = nullptr);

// Expanded images and shift-model targets reconstructed from a stored
// artifact (values only, no tape).
std::pair<Tensor, Tensor> artifact_training_pairs(const DistilledArtifact& artifact,
                                                  const ShiftModel& shift);
std::unique_ptr<Extractor> pretrain_extractor(const DistilledArtifact& artifact,
                                              const ArchConfig& arch, const PretrainConfig& cfg,
                                              PretrainLog* log = nullptr);

struct LinearEvalConfig {
  int epochs = 100;
  int64_t batch_size = 256;
  double lr = 0.2;  // cosine to zero
  double momentum = 0.9;
  uint64_t seed = 1;
  int64_t feature_chunk = 1024;
};

// Trains only a softmax classifier on frozen features; returns test top-1.
double linear_eval(const Extractor& extractor, const LabeledDataset& data,
                   const LinearEvalConfig& cfg);

struct PairSet {
  Tensor images;
  Tensor reps;
  std::vector<int64_t> indices;
};

// N random source rows paired with their teacher representations.
PairSet baseline_random(const Tensor& images, const TeacherModel& teacher, int64_t n,
                        uint64_t seed);
// k-means in teacher space; medoid rows paired with their representations.
PairSet baseline_kmeans(const Tensor& images, const TeacherModel& teacher, int64_t n,
                        uint64_t seed);

// ---------------------------------------------------------------------------
// desk pipeline + ablations
// ---------------------------------------------------------------------------

struct DeskConfig {
  TeacherConfig teacher;
  int64_t budget_images = 20;
  InitConfig init;  // spec selects the augmentation family
  ConvNetConfig inner_arch;
  DistillConfig distill;
  ApproxTrainConfig approx;
  PretrainConfig pretrain;
  LinearEvalConfig eval;
};

// Everything one seed produces for the full method.
struct DeskRun {
  TeacherModel teacher;
  Tensor teacher_reps;  // train-set representations
  DistillResult distill;
  ApproxTrainResult approx;
  DistilledArtifact artifact;
};

DeskRun run_full_pipeline(const LabeledDataset& data, const DeskConfig& cfg, uint64_t seed);

enum class InitVariant { PcProjection, RealRandom, RandomRandom };

// Table-style initialization baselines: bases from noise or raw source rows,
// coefficients from noise.
Parameterization init_variant(InitVariant variant, const Tensor& images,
                              const TeacherModel& teacher, const InitConfig& cfg,
                              const StorageBudget& budget);

// Non-parameterized reference: raw pairs optimized directly by the same
// bilevel engine, sized to the same float budget.
struct DirectDistillOutcome {
  Tensor xs;
  Tensor ys;
  std::vector<double> outer_loss_trace;
};
DirectDistillOutcome run_direct_distillation(const Tensor& images, const TeacherModel& teacher,
                                             const Tensor& teacher_reps,
                                             const StorageBudget& budget,
                                             const ConvNetConfig& inner_arch,
                                             const DistillConfig& cfg);

struct EvalCell {
  std::string method;
  std::string arch;
  std::string dataset;
  uint64_t seed = 0;
  double accuracy = 0.0;
};

struct EvalAggregate {
  std::string method, arch, dataset;
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};

struct EvalReport {
  std::vector<EvalCell> cells;
  std::string tsv() const;
  static EvalReport from_tsv(const std::string& text);
  std::vector<EvalAggregate> aggregate() const;
  std::string aggregate_tsv() const;
  double mean_accuracy(const std::string& method, const std::string& arch = "") const;
};

struct AblationOptions {
  bool components = true;
  bool init_axis = true;
  bool shift_axis = true;
  bool augmentation_axis = false;
  // random/kmeans reference sets plus the unseen-architecture cells
  bool baselines = false;
  std::vector<uint64_t> seeds = {1, 2, 3};
  int threads = 2;
};

// Runs the requested axes end to end; one EvalCell per (method, seed), plus
// shift-model MSE rows under method names "mse/<variant>".
EvalReport ablation_suite(const LabeledDataset& data, const DeskConfig& cfg,
                          const AblationOptions& options);

// Deterministic helper used by the suite and the acceptance checks.
void parallel_cells(int threads, int64_t count, const std::function<void(int64_t)>& fn);

}  // namespace ssdd
