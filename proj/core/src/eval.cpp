#include "ssdd/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace ssdd {

std::unique_ptr<Extractor> make_extractor(const ArchConfig& arch, Rng& rng) {
  if (arch.kind == "convnet") return std::make_unique<ConvNetExtractor>(arch.convnet, rng);
  if (arch.kind == "mlp") return std::make_unique<MlpExtractor>(arch.mlp, rng);
  throw ConfigError("make_extractor: unknown architecture '" + arch.kind + "'");
}

namespace {

// Batch bounds with a >= 2 tail fold (batch statistics need two samples).
std::vector<std::pair<int64_t, int64_t>> batch_ranges(int64_t n, int64_t batch) {
  std::vector<std::pair<int64_t, int64_t>> out;
  for (int64_t begin = 0; begin < n;) {
    int64_t end = std::min(n, begin + batch);
    if (n - end == 1) end = n;
    out.emplace_back(begin, end);
    begin = end;
  }
  return out;
}

}  // namespace

std::unique_ptr<Extractor> pretrain_on_pairs(const Tensor& images, const Tensor& reps,
                                             const ArchConfig& arch, const PretrainConfig& cfg,
                                             PretrainLog* log) {
  const int64_t n = images.dim(0);
  if (n != reps.dim(0)) throw ShapeError("pretrain: image/representation row mismatch");
  Rng rng(cfg.seed);
  auto extractor = make_extractor(arch, rng);
  LinearHead head(extractor->feature_dim(), reps.dim(1), rng);
  if (cfg.epochs == 0) return extractor;

  std::vector<Tensor> params = extractor->parameters();
  params.push_back(head.weight);
  Sgd opt(std::move(params), cfg.sgd);

  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (auto [begin, end] : batch_ranges(n, cfg.batch_size)) {
      std::span<const int64_t> idx(order.data() + begin, static_cast<size_t>(end - begin));
      Tensor x = take_rows(images, idx);
      Tensor y = take_rows(reps, idx);
      Tensor loss = mse(head.forward(extractor->forward(x)), y);
      if (!all_finite(loss))
        throw NumericError("pretrain: loss diverged at epoch " + std::to_string(epoch));
      opt.zero_grad();
      backward(loss);
      opt.step();
      epoch_loss += loss.item();
      ++batches;
    }
    if (log) log->epoch_mse.push_back(epoch_loss / static_cast<double>(std::max<int64_t>(1, batches)));
  }
  return extractor;
}

std::pair<Tensor, Tensor> artifact_training_pairs(const DistilledArtifact& artifact,
                                                  const ShiftModel& shift) {
  if (shift.num_augmentations != artifact.spec.count())
    throw ContractError("artifact pairs: shift model covers " +
                        std::to_string(shift.num_augmentations) + " augmentations, artifact has " +
                        std::to_string(artifact.spec.count()));
  Tensor images = reconstruct_images(artifact.image_coeffs, artifact.image_bases_view());
  Tensor xs = expand_batch(images, artifact.spec).detach();
  Tensor ys = predict_targets(shift, artifact.rep_coeffs, artifact.rep_bases_view()).detach();
  return {xs, ys};
}

std::unique_ptr<Extractor> pretrain_extractor(const DistilledArtifact& artifact,
                                              const ArchConfig& arch, const PretrainConfig& cfg,
                                              PretrainLog* log) {
  if (artifact.spec.count() > 0 &&
      static_cast<int64_t>(artifact.approx_nets.size()) != artifact.spec.count())
    throw ContractError("pretrain_extractor: artifact lacks trained approximation networks");
  ShiftModel shift = artifact.spec.count() > 0
                         ? ShiftModel::approx(artifact.approx_nets)
                         : ShiftModel::same(0);
  auto [xs, ys] = artifact_training_pairs(artifact, shift);
  return pretrain_on_pairs(xs, ys, arch, cfg, log);
}

double linear_eval(const Extractor& extractor, const LabeledDataset& data,
                   const LinearEvalConfig& cfg) {
  Tensor train_feats = featurize_chunked(extractor, data.train_images, cfg.feature_chunk);
  Tensor test_feats = featurize_chunked(extractor, data.test_images, cfg.feature_chunk);
  const int64_t n = train_feats.dim(0);
  const int64_t d = train_feats.dim(1);
  const int64_t classes = data.classes;

  Tensor w = Tensor::zeros({d, classes}, true);
  Tensor b = Tensor::zeros({classes}, true);
  Sgd opt({w, b}, {.lr = cfg.lr, .momentum = cfg.momentum, .weight_decay = 0.0});

  Rng rng(cfg.seed);
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  const auto ranges = batch_ranges(n, cfg.batch_size);
  const int64_t total_steps = static_cast<int64_t>(ranges.size()) * cfg.epochs;
  int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (auto [begin, end] : ranges) {
      std::span<const int64_t> idx(order.data() + begin, static_cast<size_t>(end - begin));
      Tensor x = take_rows(train_feats, idx);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (int64_t i : idx) labels.push_back(data.train_labels[static_cast<size_t>(i)]);
      Tensor loss = softmax_xent(linear(x, w, b), labels);
      opt.zero_grad();
      backward(loss);
      opt.step(schedule_scale(Schedule::Cosine, step++, total_steps));
    }
  }

  Tensor logits = linear(test_feats, w, b);
  int64_t hits = 0;
  const int64_t tests = test_feats.dim(0);
  for (int64_t i = 0; i < tests; ++i) {
    int best = 0;
    for (int64_t c = 1; c < classes; ++c)
      if (logits.data()[i * classes + c] > logits.data()[i * classes + best])
        best = static_cast<int>(c);
    if (best == data.test_labels[static_cast<size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(tests);
}

PairSet baseline_random(const Tensor& images, const TeacherModel& teacher, int64_t n,
                        uint64_t seed) {
  PairSet out;
  out.indices = Rng(seed).sample_indices(images.dim(0), n);
  out.images = take_rows(images, out.indices);
  out.reps = teacher.representations(out.images);
  return out;
}

PairSet baseline_kmeans(const Tensor& images, const TeacherModel& teacher, int64_t n,
                        uint64_t seed) {
  Tensor reps = teacher.representations(images);
  KMeansResult km = kmeans(reps, n, seed);
  PairSet out;
  out.indices = km.medoids;
  out.images = take_rows(images, out.indices);
  out.reps = take_rows(reps, out.indices);
  return out;
}

// ---------------------------------------------------------------------------
// pipelines
// ---------------------------------------------------------------------------

namespace {

uint64_t sub_seed(uint64_t base, uint64_t salt) { return Rng(base).fork(salt).seed(); }

}  // namespace

DeskRun run_full_pipeline(const LabeledDataset& data, const DeskConfig& cfg, uint64_t seed) {
  DeskRun run;
  TeacherConfig tcfg = cfg.teacher;
  tcfg.seed = sub_seed(seed, 1);
  run.teacher = train_teacher(data.train_images, tcfg, nullptr);
  run.teacher_reps = run.teacher.representations(data.train_images);

  InitConfig icfg = cfg.init;
  icfg.seed = sub_seed(seed, 2);
  DistillConfig dcfg = cfg.distill;
  dcfg.seed = sub_seed(seed, 3);
  const StorageBudget budget{cfg.budget_images, data.geom().d_x()};
  run.distill = run_distillation(data.train_images, run.teacher, icfg, budget, cfg.inner_arch,
                                 dcfg, nullptr, &run.teacher_reps);

  ApproxTrainConfig acfg = cfg.approx;
  acfg.hidden = icfg.approx_hidden;  // budget-derived m assumed this width
  acfg.seed = sub_seed(seed, 4);
  run.approx = train_approx(run.distill.param.rep_coeffs.base, run.distill.param.rep_coeffs.aug,
                            acfg);

  run.artifact = make_artifact(run.distill.param, run.approx.nets, acfg.hidden,
                               cfg.budget_images, {{"seed", std::to_string(seed)}});
  return run;
}

Parameterization init_variant(InitVariant variant, const Tensor& images,
                              const TeacherModel& teacher, const InitConfig& cfg,
                              const StorageBudget& budget) {
  if (variant == InitVariant::PcProjection)
    return init_from_source(images, teacher, cfg, budget);

  const int64_t n = images.dim(0);
  ImageGeom geom{images.dim(1), images.dim(2), images.dim(3)};
  const int64_t d_x_b = geom.d_x() / (cfg.scale * cfg.scale);
  const int64_t d_y = teacher.rep_dim();
  const int64_t u = cfg.u > 0 ? cfg.u : std::min<int64_t>(2 * budget.n_images, std::min(n, d_x_b));
  const int64_t v = cfg.v > 0 ? cfg.v : std::min<int64_t>(2 * budget.n_images, std::min(n, d_y));
  const int64_t approx_floats = approx_float_count(cfg.spec.count(), v, cfg.approx_hidden);
  const int64_t m = std::min(derive_m(budget, u, v, d_x_b, d_y, approx_floats), n);

  Rng rng(cfg.seed);
  Parameterization p;
  p.spec = cfg.spec;
  p.sample_indices = rng.sample_indices(n, m);
  p.image_bases.scale = cfg.scale;
  p.image_bases.geom = geom;
  p.image_bases.mean = Tensor::zeros({d_x_b});
  p.rep_bases.mean = Tensor::zeros({d_y});

  if (variant == InitVariant::RandomRandom) {
    p.image_bases.basis = Tensor::randn({u, d_x_b}, rng, 1.0, true);
    p.rep_bases.basis = Tensor::randn({v, d_y}, rng, 1.0, true);
  } else {  // RealRandom: bases are raw source rows
    Tensor down = reshape(downsample_avg(images, cfg.scale), {n, d_x_b});
    p.image_bases.basis = take_rows(down, rng.sample_indices(n, u)).detach(true);
    Tensor reps = teacher.representations(images);
    p.rep_bases.basis = take_rows(reps, rng.sample_indices(n, v)).detach(true);
  }
  p.image_coeffs = Tensor::randn({m, u}, rng, 1.0, true);
  p.rep_coeffs.base = Tensor::randn({m, v}, rng, 1.0, true);
  for (int64_t a = 0; a < cfg.spec.count(); ++a)
    p.rep_coeffs.aug.push_back(Tensor::randn({m, v}, rng, 1.0, true));
  return p;
}

DirectDistillOutcome run_direct_distillation(const Tensor& images, const TeacherModel& teacher,
                                             const Tensor& teacher_reps,
                                             const StorageBudget& budget,
                                             const ConvNetConfig& inner_arch,
                                             const DistillConfig& cfg) {
  const int64_t n = images.dim(0);
  const int64_t d_y = teacher.rep_dim();
  const int64_t m =
      std::min(budget.total_floats() / (budget.d_x + d_y), n);
  if (m < 1) throw ConfigError("direct distillation: budget below one raw pair");
  auto indices = Rng(cfg.seed).fork(0xD17EC7).sample_indices(n, m);
  auto model = std::make_shared<DirectDistillModel>(take_rows(images, indices),
                                                    take_rows(teacher_reps, indices));
  ModelPool pool(convnet_pool_factory(inner_arch, d_y), cfg.pool,
                 Rng(cfg.seed).fork(0xB00C).seed());
  DistillEngine engine(model, images, teacher_reps, std::move(pool), cfg);
  engine.run(nullptr);
  DirectDistillOutcome out;
  out.xs = model->xs().detach();
  out.ys = model->ys().detach();
  out.outer_loss_trace = engine.loss_trace();
  return out;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

std::string EvalReport::tsv() const {
  std::ostringstream os;
  os << "method\tarch\tdataset\tseed\taccuracy\n";
  char buf[64];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof(buf), "%.17g", c.accuracy);
    os << c.method << '\t' << c.arch << '\t' << c.dataset << '\t' << c.seed << '\t' << buf
       << '\n';
  }
  return os.str();
}

EvalReport EvalReport::from_tsv(const std::string& text) {
  EvalReport report;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;  // header
    }
    EvalCell cell;
    std::istringstream ls(line);
    std::string seed, acc;
    if (!std::getline(ls, cell.method, '\t') || !std::getline(ls, cell.arch, '\t') ||
        !std::getline(ls, cell.dataset, '\t') || !std::getline(ls, seed, '\t') ||
        !std::getline(ls, acc, '\t'))
      throw IoError("report: malformed row: " + line);
    cell.seed = std::stoull(seed);
    cell.accuracy = std::stod(acc);
    report.cells.push_back(std::move(cell));
  }
  return report;
}

std::vector<EvalAggregate> EvalReport::aggregate() const {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const auto& c : cells) groups[{c.method, c.arch, c.dataset}].push_back(c.accuracy);
  std::vector<EvalAggregate> out;
  for (const auto& [key, values] : groups) {
    EvalAggregate agg;
    agg.method = std::get<0>(key);
    agg.arch = std::get<1>(key);
    agg.dataset = std::get<2>(key);
    agg.count = static_cast<int>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    agg.mean = sum / static_cast<double>(values.size());
    if (values.size() >= 2) {
      double ss = 0.0;
      for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
      agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    out.push_back(std::move(agg));
  }
  return out;
}

std::string EvalReport::aggregate_tsv() const {
  std::ostringstream os;
  os << "method\tarch\tdataset\tmean\tstddev\tcount\n";
  char a[64], b[64];
  for (const auto& agg : aggregate()) {
    std::snprintf(a, sizeof(a), "%.17g", agg.mean);
    std::snprintf(b, sizeof(b), "%.17g", agg.stddev);
    os << agg.method << '\t' << agg.arch << '\t' << agg.dataset << '\t' << a << '\t' << b << '\t'
       << agg.count << '\n';
  }
  return os.str();
}

double EvalReport::mean_accuracy(const std::string& method, const std::string& arch) const {
  double sum = 0.0;
  int count = 0;
  for (const auto& c : cells)
    if (c.method == method && (arch.empty() || c.arch == arch)) {
      sum += c.accuracy;
      ++count;
    }
  if (count == 0) throw ContractError("report: no cells for method '" + method + "'");
  return sum / count;
}

// ---------------------------------------------------------------------------
// ablation suite
// ---------------------------------------------------------------------------

void parallel_cells(int threads, int64_t count, const std::function<void(int64_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    while (true) {
      const int64_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int64_t>(threads, count); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

struct SeedCells {
  std::vector<EvalCell> cells;
};

// Distill + approx + pretrain + eval for a prebuilt initialization.
double eval_parameterization(Parameterization param, const LabeledDataset& data,
                             const DeskConfig& cfg, const TeacherModel& teacher,
                             const Tensor& teacher_reps, uint64_t seed, uint64_t salt) {
  DistillConfig dcfg = cfg.distill;
  dcfg.seed = sub_seed(seed, salt);
  DistillResult result = distill_parameterization(
      std::move(param), data.train_images, teacher_reps, cfg.inner_arch, dcfg);

  std::vector<Mlp2> nets;
  if (result.param.spec.count() > 0) {
    ApproxTrainConfig acfg = cfg.approx;
    acfg.hidden = cfg.init.approx_hidden;
    acfg.seed = sub_seed(seed, salt + 1);
    nets = train_approx(result.param.rep_coeffs.base, result.param.rep_coeffs.aug, acfg).nets;
  }
  DistilledArtifact artifact = make_artifact(result.param, std::move(nets),
                                             cfg.init.approx_hidden, cfg.budget_images, {});
  PretrainConfig pcfg = cfg.pretrain;
  pcfg.seed = sub_seed(seed, salt + 2);
  ArchConfig arch{.kind = "convnet", .convnet = cfg.inner_arch, .mlp = {}};
  auto extractor = pretrain_extractor(artifact, arch, pcfg);
  LinearEvalConfig ecfg = cfg.eval;
  ecfg.seed = sub_seed(seed, salt + 3);
  return linear_eval(*extractor, data, ecfg);
}

SeedCells run_seed(const LabeledDataset& data, const DeskConfig& cfg,
                   const AblationOptions& options, uint64_t seed) {
  SeedCells out;
  const std::string dataset = "desk";
  const ArchConfig arch{.kind = "convnet", .convnet = cfg.inner_arch, .mlp = {}};
  const StorageBudget budget{cfg.budget_images, data.geom().d_x()};

  DeskRun full = run_full_pipeline(data, cfg, seed);
  auto push = [&](const std::string& method, double accuracy) {
    out.cells.push_back({method, arch.kind, dataset, seed, accuracy});
  };

  // the full method is shared by every axis
  {
    PretrainConfig pcfg = cfg.pretrain;
    pcfg.seed = sub_seed(seed, 100);
    auto extractor = pretrain_extractor(full.artifact, arch, pcfg);
    LinearEvalConfig ecfg = cfg.eval;
    ecfg.seed = sub_seed(seed, 101);
    push("full", linear_eval(*extractor, data, ecfg));
  }

  if (options.components) {
    // raw-pair bilevel distillation (no parameterization, no augmentation)
    DistillConfig dcfg = cfg.distill;
    dcfg.seed = sub_seed(seed, 110);
    DirectDistillOutcome direct = run_direct_distillation(
        data.train_images, full.teacher, full.teacher_reps, budget, cfg.inner_arch, dcfg);
    PretrainConfig pcfg = cfg.pretrain;
    pcfg.seed = sub_seed(seed, 111);
    auto extractor = pretrain_on_pairs(direct.xs, direct.ys, arch, pcfg);
    LinearEvalConfig ecfg = cfg.eval;
    ecfg.seed = sub_seed(seed, 112);
    push("noparam", linear_eval(*extractor, data, ecfg));

    // parameterization without augmentation
    InitConfig icfg = cfg.init;
    icfg.spec = {};
    icfg.seed = sub_seed(seed, 113);
    push("param", eval_parameterization(
                      init_from_source(data.train_images, full.teacher, icfg, budget), data, cfg,
                      full.teacher, full.teacher_reps, seed, 114));
  }

  if (options.init_axis) {
    InitConfig icfg = cfg.init;
    icfg.seed = sub_seed(seed, 120);
    push("init/real_random",
         eval_parameterization(init_variant(InitVariant::RealRandom, data.train_images,
                                            full.teacher, icfg, budget),
                               data, cfg, full.teacher, full.teacher_reps, seed, 121));
    icfg.seed = sub_seed(seed, 125);
    push("init/random_random",
         eval_parameterization(init_variant(InitVariant::RandomRandom, data.train_images,
                                            full.teacher, icfg, budget),
                               data, cfg, full.teacher, full.teacher_reps, seed, 126));
  }

  if (options.shift_axis) {
    const Tensor& cy = full.distill.param.rep_coeffs.base;
    const auto& ca = full.distill.param.rep_coeffs.aug;
    struct Variant {
      const char* name;
      ShiftModel model;
    };
    std::vector<Variant> variants;
    variants.push_back({"shift/same", ShiftModel::same(full.artifact.spec.count())});
    variants.push_back({"shift/bias", ShiftModel::bias_optimal(cy, ca)});
    variants.push_back({"shift/ideal", ShiftModel::ideal(ca)});
    for (auto& [name, model] : variants) {
      auto [xs, ys] = artifact_training_pairs(full.artifact, model);
      // Pretrain/eval seeds shared with the "full" cell, so the target model
      // is the only difference along this axis.
      PretrainConfig pcfg = cfg.pretrain;
      pcfg.seed = sub_seed(seed, 100);
      auto extractor = pretrain_on_pairs(xs, ys, arch, pcfg);
      LinearEvalConfig ecfg = cfg.eval;
      ecfg.seed = sub_seed(seed, 101);
      push(name, linear_eval(*extractor, data, ecfg));
    }
    push("mse/same", shift_mse(ShiftModel::same(full.artifact.spec.count()), cy, ca).mean);
    push("mse/bias", shift_mse(ShiftModel::bias_optimal(cy, ca), cy, ca).mean);
    push("mse/ours", shift_mse(ShiftModel::approx(full.approx.nets), cy, ca).mean);
  }

  if (options.augmentation_axis) {
    for (const char* family : {"jigsaw", "crop"}) {
      InitConfig icfg = cfg.init;
      icfg.spec = spec_by_name(family, static_cast<int>(data.geom().h));
      icfg.seed = sub_seed(seed, 140);
      push(std::string("aug/") + family,
           eval_parameterization(
               init_from_source(data.train_images, full.teacher, icfg, budget), data, cfg,
               full.teacher, full.teacher_reps, seed, 141));
    }
  }

  if (options.baselines) {
    PretrainConfig pcfg = cfg.pretrain;
    pcfg.seed = sub_seed(seed, 150);
    LinearEvalConfig ecfg = cfg.eval;
    ecfg.seed = sub_seed(seed, 151);

    PairSet rnd = baseline_random(data.train_images, full.teacher, cfg.budget_images,
                                  sub_seed(seed, 152));
    auto rnd_net = pretrain_on_pairs(rnd.images, rnd.reps, arch, pcfg);
    push("random", linear_eval(*rnd_net, data, ecfg));

    PairSet km = baseline_kmeans(data.train_images, full.teacher, cfg.budget_images,
                                 sub_seed(seed, 153));
    auto km_net = pretrain_on_pairs(km.images, km.reps, arch, pcfg);
    push("kmeans", linear_eval(*km_net, data, ecfg));

    ArchConfig mlp_arch;
    mlp_arch.kind = "mlp";
    mlp_arch.mlp = {.in_dim = data.geom().d_x(), .hidden = 128, .out_dim = 64};
    auto ours_mlp = pretrain_extractor(full.artifact, mlp_arch, pcfg);
    out.cells.push_back({"full", "mlp", dataset, seed, linear_eval(*ours_mlp, data, ecfg)});
    auto rnd_mlp = pretrain_on_pairs(rnd.images, rnd.reps, mlp_arch, pcfg);
    out.cells.push_back({"random", "mlp", dataset, seed, linear_eval(*rnd_mlp, data, ecfg)});
  }

  return out;
}

}  // namespace

EvalReport ablation_suite(const LabeledDataset& data, const DeskConfig& cfg,
                          const AblationOptions& options) {
  std::vector<SeedCells> per_seed(options.seeds.size());
  parallel_cells(options.threads, static_cast<int64_t>(options.seeds.size()), [&](int64_t i) {
    per_seed[static_cast<size_t>(i)] =
        run_seed(data, cfg, options, options.seeds[static_cast<size_t>(i)]);
  });
  EvalReport report;
  for (const auto& sc : per_seed)
    report.cells.insert(report.cells.end(), sc.cells.begin(), sc.cells.end());
  return report;
}

}  // namespace ssdd
