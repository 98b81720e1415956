#pragma once

#include <cstdint>
#include <vector>

#include "ssdd/nn.hpp"
#include "ssdd/parameterization.hpp"

namespace ssdd {

// How the representation shift of each augmented view is modeled when the
// distilled set is reconstructed for downstream training.
struct ShiftModel {
  enum class Kind { Same, Bias, ApproxNets, Ideal };
  Kind kind = Kind::Same;
  int64_t num_augmentations = 0;
  std::vector<Tensor> biases;        // Bias: one V-vector per augmentation
  std::vector<Mlp2> nets;            // ApproxNets: one V->hidden->V net each
  std::vector<Tensor> ideal_blocks;  // Ideal: the exact coefficient blocks

  static ShiftModel same(int64_t num_augmentations);
  // Closed-form optimal constant shift: the column mean of each block's
  // deviation from the base coefficients.
  static ShiftModel bias_optimal(const Tensor& cy, const std::vector<Tensor>& ca_blocks);
  static ShiftModel approx(std::vector<Mlp2> nets);
  static ShiftModel ideal(std::vector<Tensor> ca_blocks);
};

struct ApproxTrainConfig {
  int64_t hidden = 4;
  int64_t steps = 2000;
  double lr = 1e-3;
  uint64_t seed = 1;
};

struct ApproxTrainResult {
  std::vector<Mlp2> nets;
  std::vector<double> final_mse;  // per augmentation, per-entry mean
};

// Fits one net per augmentation to the coefficient shifts. The output layer
// warm-starts at the optimal per-augmentation bias, so the trained nets never
// do worse than the Bias model on the training blocks; the best parameters
// seen during descent are returned.
ApproxTrainResult train_approx(const Tensor& cy, const std::vector<Tensor>& ca_blocks,
                               const ApproxTrainConfig& cfg);

// Predicted coefficient shift per augmentation, each m x V.
std::vector<Tensor> predict_shifts(const ShiftModel& model, const Tensor& cy);

// Stacked targets [Y; Y + shift_1 B; ...], m(A+1) x d_y, block order matching
// expand_batch.
Tensor predict_targets(const ShiftModel& model, const Tensor& cy, const RepBases& bases);

struct ShiftMse {
  std::vector<double> per_aug;
  double mean = 0.0;
};

// Per-entry mean squared error between predicted and true coefficient blocks.
ShiftMse shift_mse(const ShiftModel& model, const Tensor& cy,
                   const std::vector<Tensor>& ca_blocks);

}  // namespace ssdd
