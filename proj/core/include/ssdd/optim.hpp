#pragma once

#include <cstdint>
#include <vector>

#include "ssdd/tensor.hpp"

namespace ssdd {

enum class Schedule { Constant, LinearDecay, Cosine };

// Learning-rate multiplier for step t of total T. LinearDecay and Cosine both
// reach 0 at the final step.
double schedule_scale(Schedule s, int64_t step, int64_t total);

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

class Sgd {
 public:
  Sgd(std::vector<Tensor> params, SgdConfig cfg);
  void step(double lr_scale = 1.0);
  void zero_grad();
  const SgdConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  SgdConfig cfg_;
};

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);
  void step(double lr_scale = 1.0);
  void zero_grad();
  int64_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace ssdd
