#include "ssdd/distill.hpp"

#include <algorithm>
#include <cmath>

namespace ssdd {

Tensor inner_loss(const Extractor& extractor, const LinearHead& head, const Tensor& xs,
                  const Tensor& ys) {
  if (xs.dim(0) != ys.dim(0))
    throw ShapeError("inner_loss: " + std::to_string(xs.dim(0)) + " samples vs " +
                     std::to_string(ys.dim(0)) + " targets");
  return mse(head.forward(extractor.forward(xs)), ys);
}

double relative_lambda(const Tensor& phi_s, double lambda_rel) {
  double trace = 0.0;
  for (double v : phi_s.data()) trace += v * v;
  return lambda_rel * trace / static_cast<double>(phi_s.dim(0));
}

Tensor krr_outer_from_features(const Tensor& phi_s, const Tensor& ys, const Tensor& phi_r,
                               const Tensor& y_teacher, double lambda) {
  if (lambda <= 0.0) throw ContractError("krr_outer_loss: lambda must be positive");
  const int64_t b = phi_r.dim(0);
  if (b < 2) throw ContractError("krr_outer_loss: real batch must have at least 2 samples");
  if (phi_s.dim(0) != ys.dim(0))
    throw ShapeError("krr_outer_loss: features/targets row mismatch");
  if (y_teacher.dim(0) != b) throw ShapeError("krr_outer_loss: teacher rows must match batch");

  Tensor kernel = matmul(phi_s, transpose(phi_s));
  Tensor ridge = add(kernel, scale(Tensor::identity(kernel.dim(0)), lambda));
  Tensor alpha;
  try {
    alpha = solve_linear(ridge, ys);
  } catch (const NumericError& e) {
    double trace = 0.0;
    for (int64_t i = 0; i < kernel.dim(0); ++i) trace += kernel.at({i, i});
    throw NumericError(std::string(e.what()) + " [ridge lambda=" + std::to_string(lambda) +
                       ", trace(K)=" + std::to_string(trace) + ", n_s=" +
                       std::to_string(kernel.dim(0)) + "]");
  }
  Tensor pred = matmul(matmul(phi_r, transpose(phi_s)), alpha);
  return scale(sum(square(sub(y_teacher, pred))), 0.5 / static_cast<double>(b));
}

Tensor krr_outer_loss(const Extractor& extractor, const Tensor& xs, const Tensor& ys,
                      const Tensor& x_real, const Tensor& y_teacher, double lambda) {
  return krr_outer_from_features(extractor.forward(xs), ys, extractor.forward(x_real), y_teacher,
                                 lambda);
}

// ---------------------------------------------------------------------------
// models
// ---------------------------------------------------------------------------

BasisDistillModel::BasisDistillModel(Parameterization param) : param_(std::move(param)) {}

std::vector<Tensor> BasisDistillModel::trainable() {
  std::vector<Tensor> out = {param_.image_bases.basis, param_.image_coeffs,
                             param_.rep_bases.basis, param_.rep_coeffs.base};
  for (auto& block : param_.rep_coeffs.aug) out.push_back(block);
  return out;
}

std::pair<Tensor, Tensor> BasisDistillModel::generate() const {
  Tensor images = reconstruct_images(param_.image_coeffs, param_.image_bases);
  Tensor xs = expand_batch(images, param_.spec);
  Tensor ys = reconstruct_targets(param_.rep_coeffs, param_.rep_bases);
  return {xs, ys};
}

int64_t BasisDistillModel::rows() const {
  return param_.m() * (param_.spec.count() + 1);
}

DirectDistillModel::DirectDistillModel(Tensor xs, Tensor ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  if (xs_.dim(0) != ys_.dim(0)) throw ShapeError("direct model: row mismatch");
  xs_.set_requires_grad(true);
  ys_.set_requires_grad(true);
}

std::vector<Tensor> DirectDistillModel::trainable() { return {xs_, ys_}; }

std::pair<Tensor, Tensor> DirectDistillModel::generate() const {
  // reshape produces interior nodes so gradients land on the leaves
  return {reshape(xs_, xs_.shape()), reshape(ys_, ys_.shape())};
}

// ---------------------------------------------------------------------------
// model pool
// ---------------------------------------------------------------------------

PoolModelFactory convnet_pool_factory(ConvNetConfig arch, int64_t rep_dim) {
  return [arch, rep_dim](Rng& rng) {
    auto extractor = std::make_unique<ConvNetExtractor>(arch, rng);
    LinearHead head(extractor->feature_dim(), rep_dim, rng);
    return std::make_pair(std::unique_ptr<Extractor>(std::move(extractor)), head);
  };
}

ModelPool::ModelPool(PoolModelFactory factory, PoolConfig cfg, uint64_t seed)
    : factory_(std::move(factory)), cfg_(cfg), rng_(seed) {
  if (cfg_.size < 1 || cfg_.max_steps < 1)
    throw ConfigError("model pool: size and max_steps must be positive");
  for (int64_t l = 0; l < cfg_.size; ++l) entries_.push_back(make_entry());
}

PoolEntry ModelPool::make_entry() {
  PoolEntry e;
  auto [extractor, head] = factory_(rng_);
  e.extractor = std::move(extractor);
  e.head = head;
  std::vector<Tensor> params = e.extractor->parameters();
  params.push_back(e.head.weight);
  e.optimizer = std::make_unique<Sgd>(std::move(params), cfg_.inner);
  return e;
}

void ModelPool::inner_step(PoolEntry& e, const Tensor& xs, const Tensor& ys) {
  Tensor loss = inner_loss(*e.extractor, e.head, xs, ys);
  if (!all_finite(loss)) throw NumericError("model pool: inner loss diverged");
  e.optimizer->zero_grad();
  backward(loss);
  e.optimizer->step();
}

void ModelPool::init_train(const Tensor& xs, const Tensor& ys) {
  for (auto& e : entries_) {
    const int64_t z = rng_.uniform_int(1, cfg_.max_steps);
    for (int64_t s = 0; s < z; ++s) inner_step(e, xs, ys);
    e.steps = z;
  }
}

int64_t ModelPool::sample_entry(Rng& rng) const {
  return rng.uniform_int(0, static_cast<int64_t>(entries_.size()) - 1);
}

void ModelPool::advance(int64_t index, const Tensor& xs, const Tensor& ys) {
  PoolEntry& e = entries_[static_cast<size_t>(index)];
  if (e.steps < cfg_.max_steps) {
    inner_step(e, xs, ys);
    ++e.steps;
    ++increments_;
  } else {
    e = make_entry();
    e.steps = 0;
    ++resets_;
  }
}

std::vector<int64_t> ModelPool::step_histogram() const {
  std::vector<int64_t> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.steps);
  return out;
}

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

DistillEngine::DistillEngine(std::shared_ptr<DistillModel> model, Tensor real_images,
                             Tensor teacher_reps, ModelPool pool, DistillConfig cfg)
    : model_(std::move(model)),
      real_images_(std::move(real_images)),
      teacher_reps_(std::move(teacher_reps)),
      pool_(std::move(pool)),
      cfg_(cfg),
      outer_opt_(model_->trainable(), cfg.outer),
      step_rng_(Rng(cfg.seed).fork(0x5eed)) {
  if (real_images_.dim(0) != teacher_reps_.dim(0))
    throw ShapeError("distill engine: teacher representations must cover the real set");
  if (cfg_.real_batch < 2) throw ConfigError("distill engine: real batch must be >= 2");
}

void DistillEngine::pool_init() {
  auto [xs, ys] = model_->generate();
  pool_.init_train(xs.detach(), ys.detach());
}

DistillStepStats DistillEngine::step() {
  DistillStepStats stats;

  // (1) regenerate the distilled set from current leaves
  auto [xs, ys] = model_->generate();

  // (2) one pool entry, uniformly with replacement
  stats.entry = pool_.sample_entry(step_rng_);
  const PoolEntry& entry = pool_.entry(stats.entry);

  // (3) outer objective on a fresh real batch
  const int64_t n = real_images_.dim(0);
  const auto batch_idx = step_rng_.sample_indices(n, std::min(cfg_.real_batch, n));
  Tensor x_real = take_rows(real_images_, batch_idx);
  Tensor y_teacher = take_rows(teacher_reps_, batch_idx);

  Tensor phi_s = entry.extractor->forward(xs);
  // Relative ridge; falls back to the bare coefficient when an entry's
  // features have collapsed (trace 0), so the step stays solvable and the
  // entry can train or reset its way back.
  double lambda = cfg_.lambda > 0.0 ? cfg_.lambda : relative_lambda(phi_s, cfg_.lambda_rel);
  if (lambda <= 0.0) lambda = cfg_.lambda_rel;
  Tensor phi_r = entry.extractor->forward(x_real);
  Tensor loss = krr_outer_from_features(phi_s, ys, phi_r, y_teacher, lambda);
  if (!all_finite(loss))
    throw NumericError("distill: outer loss non-finite at iteration " + std::to_string(iter_));
  stats.outer_loss = loss.item();
  stats.lambda = lambda;

  // (4) update bases and coefficients
  outer_opt_.zero_grad();
  backward(loss);
  outer_opt_.step(schedule_scale(cfg_.outer_schedule, iter_, cfg_.outer_iterations));

  // (5) advance the sampled entry on the post-update distilled set
  auto [xs2, ys2] = model_->generate();
  const int64_t before = pool_.entry(stats.entry).steps;
  pool_.advance(stats.entry, xs2.detach(), ys2.detach());
  stats.reset = pool_.entry(stats.entry).steps < before;

  ++iter_;
  loss_trace_.push_back(stats.outer_loss);
  return stats;
}

void DistillEngine::run(std::ostream* progress) {
  pool_init();
  for (int64_t t = 0; t < cfg_.outer_iterations; ++t) {
    DistillStepStats stats = step();
    if (progress && (t % cfg_.log_every == 0 || t + 1 == cfg_.outer_iterations)) {
      (*progress) << "iter\t" << t << "\touter_loss\t" << stats.outer_loss << "\tz";
      const auto hist = pool_.step_histogram();
      for (size_t i = 0; i < hist.size(); ++i) (*progress) << (i ? "," : "\t") << hist[i];
      (*progress) << "\n";
    }
  }
}

DistillResult distill_parameterization(Parameterization param, const Tensor& images,
                                       const Tensor& teacher_reps,
                                       const ConvNetConfig& inner_arch, const DistillConfig& cfg,
                                       std::ostream* progress) {
  const int64_t rep_dim = param.rep_bases.dim();
  auto model = std::make_shared<BasisDistillModel>(std::move(param));
  ModelPool pool(convnet_pool_factory(inner_arch, rep_dim), cfg.pool,
                 Rng(cfg.seed).fork(0xB00C).seed());
  DistillEngine engine(model, images, teacher_reps, std::move(pool), cfg);
  engine.run(progress);

  DistillResult result;
  result.param = model->param();
  result.outer_loss_trace = engine.loss_trace();
  result.pool_increments = engine.pool().total_increments();
  result.pool_resets = engine.pool().total_resets();
  return result;
}

DistillResult run_distillation(const Tensor& images, const TeacherModel& teacher,
                               const InitConfig& init_cfg, const StorageBudget& budget,
                               const ConvNetConfig& inner_arch, const DistillConfig& cfg,
                               std::ostream* progress, const Tensor* teacher_reps) {
  if (!teacher.frozen()) throw ContractError("run_distillation: teacher must be frozen");
  Parameterization param = init_from_source(images, teacher, init_cfg, budget);
  Tensor reps = teacher_reps ? *teacher_reps : teacher.representations(images);
  return distill_parameterization(std::move(param), images, reps, inner_arch, cfg, progress);
}

}  // namespace ssdd
