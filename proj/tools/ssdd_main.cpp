// Command-line surface for the distillation pipeline: teacher pretraining,
// distillation, approximation-net training, reconstruction, downstream
// pretraining, linear evaluation, the ablation suite, and budget audits.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ssdd/artifact.hpp"
#include "ssdd/config.hpp"
#include "ssdd/dataset.hpp"
#include "ssdd/distill.hpp"
#include "ssdd/eval.hpp"
#include "ssdd/image_io.hpp"
#include "ssdd/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ssdd;

namespace {

// Exit codes, also listed in --help:
//   0 success, 64 usage, 65 unreadable or corrupt data, 70 numerical failure,
//   71 contract violation, 78 invalid configuration, 1 unexpected error.
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitNumeric = 70;
constexpr int kExitContract = 71;
constexpr int kExitConfig = 78;

struct GlobalArgs {
  uint64_t seed = 1;
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  std::string data;
};

KeyValueConfig load_config(const GlobalArgs& args) {
  KeyValueConfig cfg;
  if (!args.config_path.empty()) cfg = KeyValueConfig::load(args.config_path);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.data.empty()) {
    if (args.data == "digits" || args.data == "blobs") {
      cfg.set("dataset.kind", args.data);
    } else {
      cfg.set("dataset.kind", "file");
      cfg.set("dataset.path", args.data);
    }
  }
  return cfg;
}

LabeledDataset resolve_dataset(const KeyValueConfig& cfg) {
  const std::string kind = cfg.get_string("dataset.kind", "digits");
  if (kind == "file") {
    const std::string path = cfg.get_string("dataset.path", "");
    if (path.empty()) throw ConfigError("dataset.kind=file requires dataset.path");
    return load_dataset(path);
  }
  if (kind == "digits") {
    DigitsConfig dc;
    dc.train_size = cfg.get_int("dataset.train", 5000);
    dc.test_size = cfg.get_int("dataset.test", 1000);
    dc.image_hw = static_cast<int>(cfg.get_int("dataset.hw", 16));
    dc.seed = static_cast<uint64_t>(cfg.get_int("dataset.seed", 7));
    dc.noise = cfg.get_double("dataset.noise", 0.12);
    return make_digits(dc);
  }
  if (kind == "blobs") {
    BlobsConfig bc;
    bc.train_size = cfg.get_int("dataset.train", 256);
    bc.test_size = cfg.get_int("dataset.test", 64);
    bc.image_hw = static_cast<int>(cfg.get_int("dataset.hw", 8));
    bc.classes = static_cast<int>(cfg.get_int("dataset.classes", 4));
    bc.seed = static_cast<uint64_t>(cfg.get_int("dataset.seed", 7));
    bc.noise = cfg.get_double("dataset.noise", 0.1);
    return make_blobs(bc);
  }
  throw ConfigError("dataset.kind must be digits|blobs|file, got '" + kind + "'");
}

ConvNetConfig convnet_from(const KeyValueConfig& cfg, const char* prefix, int image_hw,
                           int in_channels) {
  ConvNetConfig net;
  net.in_channels = in_channels;
  net.image_hw = image_hw;
  const std::string p(prefix);
  net.width = static_cast<int>(cfg.get_int(p + ".width", 16));
  const int depth = static_cast<int>(cfg.get_int(p + ".depth", 0));
  net.depth = depth > 0 ? depth : default_convnet_depth(image_hw);
  return net;
}

DeskConfig desk_config(const KeyValueConfig& cfg, const LabeledDataset& data) {
  const auto geom = data.geom();
  DeskConfig desk;
  desk.teacher.backbone =
      convnet_from(cfg, "teacher", static_cast<int>(geom.h), static_cast<int>(geom.c));
  desk.teacher.rep_dim = cfg.get_int("teacher.rep_dim", 32);
  desk.teacher.epochs = static_cast<int>(cfg.get_int("teacher.epochs", 8));
  desk.teacher.batch_size = cfg.get_int("teacher.batch", 256);
  desk.teacher.lr = cfg.get_double("teacher.lr", 1e-3);
  desk.teacher.weight_decay = cfg.get_double("teacher.wd", 1e-4);
  desk.teacher.off_diag_weight = cfg.get_double("teacher.offdiag", 5e-3);
  desk.teacher.crop_pad = static_cast<int>(cfg.get_int("teacher.pad", 4));

  desk.budget_images = cfg.get_int("budget.images", 20);

  desk.init.u = cfg.get_int("init.u", 0);
  desk.init.v = cfg.get_int("init.v", 0);
  desk.init.scale = static_cast<int>(cfg.get_int("init.scale", 2));
  desk.init.approx_hidden = cfg.get_int("init.hidden", 4);
  desk.init.spec =
      spec_by_name(cfg.get_string("aug.family", "rotation"), static_cast<int>(geom.h));

  desk.inner_arch = convnet_from(cfg, "inner", static_cast<int>(geom.h), static_cast<int>(geom.c));

  desk.distill.outer_iterations = cfg.get_int("distill.iterations", 300);
  desk.distill.outer.lr = cfg.get_double("distill.lr", 1e-3);
  const std::string sched = cfg.get_string("distill.schedule", "linear");
  desk.distill.outer_schedule = sched == "constant" ? Schedule::Constant
                                : sched == "cosine" ? Schedule::Cosine
                                                    : Schedule::LinearDecay;
  desk.distill.real_batch = cfg.get_int("distill.real_batch", 64);
  desk.distill.lambda = cfg.get_double("distill.lambda", 0.0);
  desk.distill.lambda_rel = cfg.get_double("distill.lambda_rel", 1e-6);
  desk.distill.pool.size = cfg.get_int("distill.pool_size", 10);
  desk.distill.pool.max_steps = cfg.get_int("distill.pool_max_steps", 40);
  desk.distill.pool.inner.lr = cfg.get_double("distill.inner_lr", 0.1);
  desk.distill.pool.inner.momentum = cfg.get_double("distill.inner_momentum", 0.9);
  desk.distill.log_every = cfg.get_int("distill.log_every", 25);

  desk.approx.steps = cfg.get_int("approx.steps", 2000);
  desk.approx.lr = cfg.get_double("approx.lr", 1e-3);
  desk.approx.hidden = desk.init.approx_hidden;

  desk.pretrain.epochs = static_cast<int>(cfg.get_int("pretrain.epochs", 300));
  desk.pretrain.batch_size = cfg.get_int("pretrain.batch", 256);
  desk.pretrain.sgd.lr = cfg.get_double("pretrain.lr", 0.1);
  desk.pretrain.sgd.momentum = cfg.get_double("pretrain.momentum", 0.9);
  desk.pretrain.sgd.weight_decay = cfg.get_double("pretrain.wd", 1e-3);

  desk.eval.epochs = static_cast<int>(cfg.get_int("eval.epochs", 100));
  desk.eval.batch_size = cfg.get_int("eval.batch", 256);
  desk.eval.lr = cfg.get_double("eval.lr", 0.2);
  desk.eval.momentum = cfg.get_double("eval.momentum", 0.9);
  return desk;
}

ArchConfig arch_config(const KeyValueConfig& cfg, const LabeledDataset& data) {
  const auto geom = data.geom();
  ArchConfig arch;
  arch.kind = cfg.get_string("arch.kind", "convnet");
  arch.convnet = convnet_from(cfg, "inner", static_cast<int>(geom.h), static_cast<int>(geom.c));
  arch.mlp.in_dim = geom.d_x();
  arch.mlp.hidden = cfg.get_int("mlp.hidden", 128);
  arch.mlp.out_dim = cfg.get_int("mlp.out", 64);
  return arch;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const KeyValueConfig& cfg, uint64_t seed,
                    const std::vector<std::string>& outputs) {
  json manifest;
  manifest["tool_version"] = kVersionString;
  manifest["container_version"] = kContainerVersion;
  manifest["command"] = command;
  manifest["seed"] = seed;
  std::ostringstream hash_hex;
  hash_hex << std::hex << cfg.hash();
  manifest["config_hash"] = hash_hex.str();
  json cfg_json = json::object();
  std::istringstream canon(cfg.canonical_text());
  std::string line;
  while (std::getline(canon, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) cfg_json[line.substr(0, eq)] = line.substr(eq + 1);
  }
  manifest["config"] = cfg_json;
  manifest["outputs"] = outputs;
  std::ofstream out(out_dir / ("manifest_" + command + ".json"));
  out << manifest.dump(2) << "\n";
}

void warn_unread(const KeyValueConfig& cfg) {
  for (const auto& key : cfg.unread_keys())
    std::cerr << "warning: unused config key '" << key << "'\n";
}

Container shifts_to_container(const RepCoefficients& coeffs) {
  Container c;
  c.metadata.emplace_back("kind", "shifts");
  c.metadata.emplace_back("blocks", std::to_string(coeffs.aug.size()));
  c.add_field("base", coeffs.base);
  for (size_t a = 0; a < coeffs.aug.size(); ++a)
    c.add_field("block" + std::to_string(a), coeffs.aug[a]);
  return c;
}

std::vector<Tensor> shifts_from_container(const Container& c) {
  if (c.require_meta("kind") != "shifts") throw IoError("expected a shifts container");
  const int64_t blocks = std::stoll(c.require_meta("blocks"));
  std::vector<Tensor> out;
  for (int64_t a = 0; a < blocks; ++a)
    out.push_back(c.field_tensor("block" + std::to_string(a)));
  return out;
}

std::unique_ptr<Extractor> extractor_from_checkpoint(const Container& c) {
  const std::string kind = c.require_meta("model_kind");
  if (kind == "convnet") return convnet_from_container(c);
  if (kind == "mlp") return mlp_from_container(c);
  throw IoError("checkpoint: cannot evaluate model kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_train_teacher(const GlobalArgs& args) {
  KeyValueConfig cfg = load_config(args);
  LabeledDataset data = resolve_dataset(cfg);
  DeskConfig desk = desk_config(cfg, data);
  desk.teacher.seed = args.seed;
  TeacherTrainLog log;
  TeacherModel teacher = train_teacher(data.train_images, desk.teacher, &log);
  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  write_container(out / "teacher.ssdd", teacher_to_container(teacher));
  std::ofstream trace(out / "teacher_loss.tsv");
  trace << "epoch\tloss\n";
  for (size_t e = 0; e < log.epoch_loss.size(); ++e) trace << e << '\t' << log.epoch_loss[e] << '\n';
  warn_unread(cfg);
  write_manifest(out, "train-teacher", cfg, args.seed, {"teacher.ssdd", "teacher_loss.tsv"});
  std::cout << "teacher trained: epochs=" << log.epoch_loss.size()
            << " final_loss=" << (log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back()) << "\n";
  return 0;
}

int cmd_distill(const GlobalArgs& args, const std::string& teacher_path, int64_t iterations) {
  KeyValueConfig cfg = load_config(args);
  LabeledDataset data = resolve_dataset(cfg);
  DeskConfig desk = desk_config(cfg, data);
  if (iterations >= 0) desk.distill.outer_iterations = iterations;
  desk.init.seed = args.seed;
  desk.distill.seed = args.seed;
  TeacherModel teacher = teacher_from_container(read_container(teacher_path));

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  std::ofstream progress(out / "distill_log.tsv");
  const StorageBudget budget{desk.budget_images, data.geom().d_x()};
  DistillResult result = run_distillation(data.train_images, teacher, desk.init, budget,
                                          desk.inner_arch, desk.distill, &progress);

  DistilledArtifact artifact =
      make_artifact(result.param, {}, desk.init.approx_hidden, desk.budget_images,
                    {{"seed", std::to_string(args.seed)}});
  write_container(out / "artifact.ssdd", to_container(artifact));
  write_container(out / "shifts.ssdd", shifts_to_container(result.param.rep_coeffs));
  warn_unread(cfg);
  write_manifest(out, "distill", cfg, args.seed,
                 {"artifact.ssdd", "shifts.ssdd", "distill_log.tsv"});
  std::cout << "distilled m=" << artifact.m() << " rows=" << result.param.m() * (artifact.spec.count() + 1)
            << " final_outer_loss="
            << (result.outer_loss_trace.empty() ? 0.0 : result.outer_loss_trace.back()) << "\n";
  return 0;
}

int cmd_train_approx(const GlobalArgs& args, const std::string& artifact_path,
                     const std::string& shifts_path) {
  KeyValueConfig cfg = load_config(args);
  DistilledArtifact artifact = artifact_from_container(read_container(artifact_path));
  std::vector<Tensor> blocks = shifts_from_container(read_container(shifts_path));
  ApproxTrainConfig acfg;
  acfg.hidden = artifact.approx_hidden;
  acfg.steps = cfg.get_int("approx.steps", 2000);
  acfg.lr = cfg.get_double("approx.lr", 1e-3);
  acfg.seed = args.seed;
  ApproxTrainResult trained = train_approx(artifact.rep_coeffs, blocks, acfg);
  artifact.approx_nets = trained.nets;

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  write_container(out / "artifact.ssdd", to_container(artifact));
  warn_unread(cfg);
  write_manifest(out, "train-approx", cfg, args.seed, {"artifact.ssdd"});
  std::cout << "approximation nets trained:";
  for (double m : trained.final_mse) std::cout << " " << m;
  std::cout << "\n";
  return 0;
}

int cmd_reconstruct(const GlobalArgs& args, const std::string& artifact_path) {
  KeyValueConfig cfg = load_config(args);
  DistilledArtifact artifact = artifact_from_container(read_container(artifact_path));
  ShiftModel shift = artifact.approx_nets.empty()
                         ? ShiftModel::same(artifact.spec.count())
                         : ShiftModel::approx(artifact.approx_nets);
  auto [xs, ys] = artifact_training_pairs(artifact, shift);

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  Container c;
  c.metadata.emplace_back("kind", "reconstruction");
  c.add_field("images", xs);
  c.add_field("targets", ys);
  write_container(out / "reconstruction.ssdd", c);
  write_preview_grid(out / "preview.pgm",
                     slice_rows(xs, 0, std::min<int64_t>(xs.dim(0), 64)).detach());
  warn_unread(cfg);
  write_manifest(out, "reconstruct", cfg, args.seed, {"reconstruction.ssdd", "preview.pgm"});
  std::cout << "reconstructed " << xs.dim(0) << " images\n";
  return 0;
}

int cmd_pretrain(const GlobalArgs& args, const std::string& artifact_path) {
  KeyValueConfig cfg = load_config(args);
  LabeledDataset data = resolve_dataset(cfg);
  DeskConfig desk = desk_config(cfg, data);
  ArchConfig arch = arch_config(cfg, data);
  desk.pretrain.seed = args.seed;
  DistilledArtifact artifact = artifact_from_container(read_container(artifact_path));
  PretrainLog log;
  auto extractor = pretrain_extractor(artifact, arch, desk.pretrain, &log);

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  Container ckpt = arch.kind == "convnet"
                       ? convnet_to_container(dynamic_cast<const ConvNetExtractor&>(*extractor))
                       : mlp_to_container(dynamic_cast<const MlpExtractor&>(*extractor), arch.mlp);
  write_container(out / "extractor.ssdd", ckpt);
  warn_unread(cfg);
  write_manifest(out, "pretrain", cfg, args.seed, {"extractor.ssdd"});
  std::cout << "pretrained " << arch.kind << ": final_mse="
            << (log.epoch_mse.empty() ? 0.0 : log.epoch_mse.back()) << "\n";
  return 0;
}

int cmd_linear_eval(const GlobalArgs& args, const std::string& model_path) {
  KeyValueConfig cfg = load_config(args);
  LabeledDataset data = resolve_dataset(cfg);
  DeskConfig desk = desk_config(cfg, data);
  desk.eval.seed = args.seed;
  auto extractor = extractor_from_checkpoint(read_container(model_path));
  const double accuracy = linear_eval(*extractor, data, desk.eval);

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  EvalReport report;
  report.cells.push_back({"checkpoint", extractor->kind(),
                          cfg.get_string("dataset.kind", "digits"), args.seed, accuracy});
  std::ofstream tsv(out / "eval.tsv");
  tsv << report.tsv();
  std::ofstream js(out / "eval.json");
  json j;
  j["accuracy"] = accuracy;
  j["arch"] = extractor->kind();
  j["seed"] = args.seed;
  js << j.dump(2) << "\n";
  warn_unread(cfg);
  write_manifest(out, "linear-eval", cfg, args.seed, {"eval.tsv", "eval.json"});
  std::cout << "top1 " << accuracy << "\n";
  return 0;
}

int cmd_ablate(const GlobalArgs& args) {
  KeyValueConfig cfg = load_config(args);
  LabeledDataset data = resolve_dataset(cfg);
  DeskConfig desk = desk_config(cfg, data);
  AblationOptions options;
  options.components = cfg.get_bool("ablate.components", true);
  options.init_axis = cfg.get_bool("ablate.init", true);
  options.shift_axis = cfg.get_bool("ablate.shift", true);
  options.augmentation_axis = cfg.get_bool("ablate.augmentation", false);
  options.baselines = cfg.get_bool("ablate.baselines", false);
  options.threads = static_cast<int>(cfg.get_int("ablate.threads", 2));
  options.seeds.clear();
  std::istringstream seeds(cfg.get_string("ablate.seeds", "1,2,3"));
  std::string tok;
  while (std::getline(seeds, tok, ',')) options.seeds.push_back(std::stoull(tok));

  EvalReport report = ablation_suite(data, desk, options);

  const fs::path out = fs::path(args.out_dir);
  fs::create_directories(out);
  std::ofstream tsv(out / "ablation.tsv");
  tsv << report.tsv();
  std::ofstream agg(out / "ablation_aggregate.tsv");
  agg << report.aggregate_tsv();
  json j = json::array();
  for (const auto& cell : report.cells)
    j.push_back({{"method", cell.method},
                 {"arch", cell.arch},
                 {"dataset", cell.dataset},
                 {"seed", cell.seed},
                 {"accuracy", cell.accuracy}});
  std::ofstream js(out / "ablation.json");
  js << j.dump(2) << "\n";
  warn_unread(cfg);
  write_manifest(out, "ablate", cfg, args.seed,
                 {"ablation.tsv", "ablation_aggregate.tsv", "ablation.json"});
  std::cout << report.aggregate_tsv();
  return 0;
}

int cmd_audit(const GlobalArgs& args, const std::string& artifact_path) {
  KeyValueConfig cfg = load_config(args);
  DistilledArtifact artifact = artifact_from_container(read_container(artifact_path));
  BudgetLedger ledger = audit_budget(artifact, artifact.budget_images, artifact.geom.d_x());
  std::cout << ledger.table();
  warn_unread(cfg);
  enforce_budget(ledger);  // ConfigError -> exit 78 when over budget
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Self-supervised dataset distillation with basis parameterization.\n"
      "Exit codes: 0 ok, 64 usage, 65 corrupt/unreadable data, 70 numerical failure,\n"
      "71 contract violation, 78 invalid configuration, 1 unexpected error."};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--seed", args.seed, "Seed for every stochastic stage");
  app.add_option("--config", args.config_path, "key=value configuration file");
  app.add_option("--out", args.out_dir, "Output directory (manifest written beside outputs)");
  app.add_option("--set", args.overrides, "Inline config override key=value (repeatable)");
  app.add_option("--data", args.data, "Dataset: 'digits', 'blobs', or a container path");

  auto* teacher_cmd = app.add_subcommand("train-teacher", "Pretrain the frozen teacher");
  std::string teacher_path = "teacher.ssdd";
  std::string artifact_path = "artifact.ssdd";
  std::string shifts_path = "shifts.ssdd";
  std::string model_path = "extractor.ssdd";
  int64_t iterations = -1;

  auto* distill_cmd = app.add_subcommand("distill", "Run the bilevel distillation");
  distill_cmd->add_option("--teacher", teacher_path, "Teacher checkpoint");
  distill_cmd->add_option("--iterations", iterations, "Override distill.iterations");

  auto* approx_cmd = app.add_subcommand("train-approx", "Fit the representation-shift nets");
  approx_cmd->add_option("--artifact", artifact_path, "Distilled artifact");
  approx_cmd->add_option("--shifts", shifts_path, "Coefficient-block sidecar from distill");

  auto* rec_cmd = app.add_subcommand("reconstruct", "Emit distilled images and targets");
  rec_cmd->add_option("--artifact", artifact_path, "Distilled artifact");

  auto* pre_cmd = app.add_subcommand("pretrain", "Train an extractor on the artifact");
  pre_cmd->add_option("--artifact", artifact_path, "Distilled artifact");

  auto* eval_cmd = app.add_subcommand("linear-eval", "Linear probe of a frozen extractor");
  eval_cmd->add_option("--model", model_path, "Extractor checkpoint");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation axes");

  auto* audit_cmd = app.add_subcommand("audit", "Check the storage budget of an artifact");
  audit_cmd->add_option("--artifact", artifact_path, "Distilled artifact");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (teacher_cmd->parsed()) return cmd_train_teacher(args);
    if (distill_cmd->parsed()) return cmd_distill(args, teacher_path, iterations);
    if (approx_cmd->parsed()) return cmd_train_approx(args, artifact_path, shifts_path);
    if (rec_cmd->parsed()) return cmd_reconstruct(args, artifact_path);
    if (pre_cmd->parsed()) return cmd_pretrain(args, artifact_path);
    if (eval_cmd->parsed()) return cmd_linear_eval(args, model_path);
    if (ablate_cmd->parsed()) return cmd_ablate(args);
    if (audit_cmd->parsed()) return cmd_audit(args, artifact_path);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
