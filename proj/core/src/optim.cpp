#include "ssdd/optim.hpp"

#include <cmath>
#include <numbers>

namespace ssdd {

double schedule_scale(Schedule s, int64_t step, int64_t total) {
  if (total <= 0) return 1.0;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  switch (s) {
    case Schedule::Constant:
      return 1.0;
    case Schedule::LinearDecay:
      return 1.0 - t;
    case Schedule::Cosine:
      return 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }
  return 1.0;
}

Sgd::Sgd(std::vector<Tensor> params, SgdConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_)
    velocity_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
}

void Sgd::step(double lr_scale) {
  const double lr = cfg_.lr * lr_scale;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto vals = params_[i].raw();
    auto grads = params_[i].grad();
    if (grads.empty()) continue;
    auto& vel = velocity_[i];
    for (size_t j = 0; j < vals.size(); ++j) {
      const double g = grads[j] + cfg_.weight_decay * vals[j];
      vel[j] = cfg_.momentum * vel[j] + g;
      vals[j] -= lr * vel[j];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void AdamW::step(double lr_scale) {
  ++t_;
  const double lr = cfg_.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto vals = params_[i].raw();
    auto grads = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < vals.size(); ++j) {
      const double g = grads.empty() ? 0.0 : grads[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      vals[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * vals[j]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ssdd
