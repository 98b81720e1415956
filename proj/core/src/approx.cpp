#include "ssdd/approx.hpp"

#include <cmath>
#include <limits>

#include "ssdd/optim.hpp"

namespace ssdd {

namespace {

void require_blocks(const Tensor& cy, const std::vector<Tensor>& blocks, const char* what) {
  for (const auto& b : blocks)
    if (b.shape() != cy.shape())
      throw ContractError(std::string(what) + ": block shape " + shape_str(b.shape()) +
                          " differs from base coefficients " + shape_str(cy.shape()));
}

Tensor column_mean_shift(const Tensor& cy, const Tensor& ca) {
  const int64_t m = cy.dim(0), v = cy.dim(1);
  std::vector<double> mean(static_cast<size_t>(v), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < v; ++j)
      mean[static_cast<size_t>(j)] += ca.data()[i * v + j] - cy.data()[i * v + j];
  for (auto& x : mean) x /= static_cast<double>(m);
  return Tensor::from_data({v}, std::move(mean));
}

double entrywise_mse(const Tensor& pred_shift, const Tensor& cy, const Tensor& ca) {
  double acc = 0.0;
  for (int64_t i = 0; i < cy.numel(); ++i) {
    const double truth = ca.data()[i] - cy.data()[i];
    const double d = pred_shift.data()[i] - truth;
    acc += d * d;
  }
  return acc / static_cast<double>(cy.numel());
}

}  // namespace

ShiftModel ShiftModel::same(int64_t num_augmentations) {
  ShiftModel m;
  m.kind = Kind::Same;
  m.num_augmentations = num_augmentations;
  return m;
}

ShiftModel ShiftModel::bias_optimal(const Tensor& cy, const std::vector<Tensor>& ca_blocks) {
  require_blocks(cy, ca_blocks, "bias_optimal");
  ShiftModel m;
  m.kind = Kind::Bias;
  m.num_augmentations = static_cast<int64_t>(ca_blocks.size());
  for (const auto& ca : ca_blocks) m.biases.push_back(column_mean_shift(cy, ca));
  return m;
}

ShiftModel ShiftModel::approx(std::vector<Mlp2> nets) {
  ShiftModel m;
  m.kind = Kind::ApproxNets;
  m.num_augmentations = static_cast<int64_t>(nets.size());
  m.nets = std::move(nets);
  return m;
}

ShiftModel ShiftModel::ideal(std::vector<Tensor> ca_blocks) {
  ShiftModel m;
  m.kind = Kind::Ideal;
  m.num_augmentations = static_cast<int64_t>(ca_blocks.size());
  m.ideal_blocks = std::move(ca_blocks);
  return m;
}

std::vector<Tensor> predict_shifts(const ShiftModel& model, const Tensor& cy) {
  const int64_t m = cy.dim(0), v = cy.dim(1);
  std::vector<Tensor> shifts;
  shifts.reserve(static_cast<size_t>(model.num_augmentations));
  switch (model.kind) {
    case ShiftModel::Kind::Same:
      for (int64_t a = 0; a < model.num_augmentations; ++a)
        shifts.push_back(Tensor::zeros({m, v}));
      break;
    case ShiftModel::Kind::Bias:
      for (const auto& bias : model.biases)
        shifts.push_back(add_rowvec(Tensor::zeros({m, v}), bias));
      break;
    case ShiftModel::Kind::ApproxNets:
      for (const auto& net : model.nets) shifts.push_back(net.forward(cy).detach());
      break;
    case ShiftModel::Kind::Ideal:
      if (model.ideal_blocks.empty())
        throw ContractError("shift model: Ideal variant without stored coefficient blocks");
      require_blocks(cy, model.ideal_blocks, "ideal shifts");
      for (const auto& ca : model.ideal_blocks) shifts.push_back(sub(ca, cy));
      break;
  }
  return shifts;
}

Tensor predict_targets(const ShiftModel& model, const Tensor& cy, const RepBases& bases) {
  Tensor base = add_rowvec(matmul(cy, bases.basis), bases.mean);
  if (model.num_augmentations == 0) return base;
  std::vector<Tensor> blocks = {base};
  for (const auto& shift : predict_shifts(model, cy))
    blocks.push_back(add(base, matmul(shift, bases.basis)));
  return concat_rows(blocks);
}

ShiftMse shift_mse(const ShiftModel& model, const Tensor& cy,
                   const std::vector<Tensor>& ca_blocks) {
  require_blocks(cy, ca_blocks, "shift_mse");
  if (static_cast<int64_t>(ca_blocks.size()) != model.num_augmentations)
    throw ContractError("shift_mse: model covers " + std::to_string(model.num_augmentations) +
                        " augmentations, got " + std::to_string(ca_blocks.size()) + " blocks");
  auto shifts = predict_shifts(model, cy);
  ShiftMse out;
  for (size_t a = 0; a < ca_blocks.size(); ++a) {
    out.per_aug.push_back(entrywise_mse(shifts[a], cy, ca_blocks[a]));
    out.mean += out.per_aug.back();
  }
  if (!out.per_aug.empty()) out.mean /= static_cast<double>(out.per_aug.size());
  return out;
}

ApproxTrainResult train_approx(const Tensor& cy, const std::vector<Tensor>& ca_blocks,
                               const ApproxTrainConfig& cfg) {
  require_blocks(cy, ca_blocks, "train_approx");
  if (cfg.hidden < 1) throw ConfigError("train_approx: hidden width must be >= 1");
  const int64_t v = cy.dim(1);
  Tensor inputs = cy.detach();

  ApproxTrainResult result;
  for (size_t a = 0; a < ca_blocks.size(); ++a) {
    Rng rng = Rng(cfg.seed).fork(a);
    Mlp2 net(v, cfg.hidden, v, rng);
    // warm start: zero output weights, bias at the optimal constant shift
    {
      auto w2 = net.w2.raw();
      std::fill(w2.begin(), w2.end(), 0.0);
      Tensor beta = column_mean_shift(cy, ca_blocks[a]);
      auto b2 = net.b2.raw();
      for (size_t j = 0; j < b2.size(); ++j) b2[j] = beta.data()[static_cast<int64_t>(j)];
    }
    Tensor target = sub(ca_blocks[a], cy).detach();

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    AdamW opt(net.parameters(), opt_cfg);

    auto train_mse = [&] { return entrywise_mse(net.forward(inputs).detach(), cy, ca_blocks[a]); };
    double best = train_mse();
    std::vector<std::vector<double>> best_params;
    for (const auto& p : net.parameters())
      best_params.emplace_back(p.data().begin(), p.data().end());

    for (int64_t s = 0; s < cfg.steps; ++s) {
      Tensor loss = scale(mse(net.forward(inputs), target), 1.0 / static_cast<double>(v));
      opt.zero_grad();
      backward(loss);
      opt.step();
      const double cur = train_mse();
      if (cur < best) {
        best = cur;
        auto params = net.parameters();
        for (size_t p = 0; p < params.size(); ++p)
          best_params[p].assign(params[p].data().begin(), params[p].data().end());
      }
    }
    auto params = net.parameters();
    for (size_t p = 0; p < params.size(); ++p) {
      auto vals = params[p].raw();
      std::copy(best_params[p].begin(), best_params[p].end(), vals.begin());
    }
    result.final_mse.push_back(best);
    result.nets.push_back(std::move(net));
  }
  return result;
}

}  // namespace ssdd
