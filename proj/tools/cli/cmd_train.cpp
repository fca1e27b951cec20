#include <json.hpp>
#include <ostream>

#include "common.hpp"
#include "edgeinfer/evalkit.hpp"
#include "edgeinfer/trainer.hpp"

namespace edgeinfer::cli {

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  fs::path model, manifest, out, report, log, cache_dir;
  TrainConfig cfg;
  std::string loss = "bce";
  std::string positive;
  int fold = 1;
  bool cv = false;
  unsigned threads = 0;
};

std::vector<int> labels_of(const DatasetManifest& m) {
  std::vector<int> y;
  for (const auto& it : m.items) y.push_back(it.class_index);
  return y;
}

std::vector<int> pick(const std::vector<int>& y, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(y[i]);
  return out;
}

void run_train(Context& ctx, TrainArgs& a) {
  a.cfg.loss = parse_loss_kind(a.loss);
  const auto manifest = load_manifest(a.manifest);
  auto backbone = load_bundle(a.model);
  backbone.meta.classes = manifest.classes;
  backbone.meta.positive_class = class_index(manifest.classes, a.positive, 0);
  const int positive = backbone.meta.positive_class;
  const int k = static_cast<int>(manifest.classes.size());
  if (a.fold < 1 || a.fold > a.cfg.folds) {
    throw Error(ErrorCode::kInvalidArgument, "--fold must lie in 1.." + std::to_string(a.cfg.folds));
  }

  ExtractOptions eo;
  if (!a.cache_dir.empty()) eo.cache_dir = a.cache_dir;
  eo.threads = a.threads;
  FeatureExtractor fx(backbone, eo);
  const auto x = fx.extract(manifest);
  const auto y = labels_of(manifest);
  ctx.out << "features: " << x.rows << " x " << x.cols << " (" << fx.forward_count() << " forwards)\n";
  const auto plan = split(manifest, a.cfg.folds, a.cfg.seed);

  if (a.cv) {
    const auto cv = cross_validate(x, y, plan, a.cfg, manifest.classes, positive, a.threads == 0 ? 1 : a.threads);
    ctx.out << cross_validation_text(cv);
    if (!a.report.empty()) write_text(a.report, cross_validation_json(cv));
  }

  const int f = a.fold - 1;
  const auto tr = plan.indices(f, Partition::kTrain), va = plan.indices(f, Partition::kVal),
             te = plan.indices(f, Partition::kTest);
  const auto xv = x.select(va);
  TrainConfig cfg = a.cfg;
  cfg.seed = a.cfg.seed + static_cast<std::uint64_t>(f);
  const auto result = train_head(x.select(tr), pick(y, tr), va.empty() ? nullptr : &xv, pick(y, va), k, positive, cfg);
  if (!a.log.empty()) write_text(a.log, training_log_table(result.log));

  const auto xs = x.select(te);
  std::vector<int> pred;
  for (std::size_t r = 0; r < xs.rows; ++r) pred.push_back(head_predict(result.head, xs.row(r), positive));
  const auto cm = confusion(pick(y, te), pred, k, manifest.classes);
  const auto mr = metrics(cm, positive);
  ctx.out << "fold " << a.fold << ": best epoch " << result.best_epoch << " of " << cfg.epochs << "\n"
          << confusion_grid(cm) << metrics_text(mr);
  if (!a.cv && !a.report.empty()) write_text(a.report, metrics_json(cm, mr));

  if (!a.out.empty()) {
    const auto full = attach_head(backbone, result.head);
    save_bundle(full, a.out);
    ctx.out << "wrote " << a.out.string() << "\n";
  }
}

struct EvalArgs {
  fs::path model, manifest, report;
  int folds = 5;
  int fold = 0;
  std::uint64_t seed = 1;
  std::string partition = "all";
  bool originals_only = false;
  unsigned threads = 0;
};

void run_eval(Context& ctx, const EvalArgs& a) {
  const auto b = load_bundle(a.model);
  const auto m = load_manifest(a.manifest);
  if (m.classes != b.meta.classes) {
    throw Error(ErrorCode::kInvalidArgument, "manifest classes differ from the model's classes");
  }
  std::vector<std::size_t> idx;
  if (a.partition == "all") {
    for (std::size_t i = 0; i < m.items.size(); ++i) idx.push_back(i);
  } else {
    if (a.fold < 1 || a.fold > a.folds) throw Error(ErrorCode::kInvalidArgument, "--fold is required with --partition");
    const Partition p = a.partition == "train" ? Partition::kTrain : a.partition == "val" ? Partition::kVal : Partition::kTest;
    idx = split(m, a.folds, a.seed).indices(a.fold - 1, p);
  }
  if (a.originals_only) std::erase_if(idx, [&](std::size_t i) { return m.items[i].origin != Origin::kOriginal; });
  if (idx.empty()) throw Error(ErrorCode::kEmptyDataset, "no items selected for evaluation");
  const auto pred = predict_items(b, m, idx, a.threads);
  std::vector<int> actual;
  for (auto i : idx) actual.push_back(m.items[i].class_index);
  const auto cm = confusion(actual, pred, static_cast<int>(m.classes.size()), m.classes);
  const auto r = metrics(cm, b.meta.positive_class);
  ctx.out << b.meta.name << " (" << b.meta.variant << ") on " << idx.size() << " items\n" << confusion_grid(cm) << metrics_text(r);
  if (!a.report.empty()) write_text(a.report, metrics_json(cm, r));
}

}  // namespace

void add_train_commands(CLI::App& app, Context& ctx) {
  {
    auto a = std::make_shared<TrainArgs>();
    auto* cmd = app.add_subcommand("train-head", "Train a dense head on frozen backbone features and attach it");
    cmd->add_option("--model", a->model, "Backbone bundle with a feature node")->required();
    cmd->add_option("--manifest", a->manifest, "Dataset manifest")->required();
    cmd->add_option("--out", a->out, "Write the backbone plus trained head as a bundle here");
    cmd->add_option("--folds", a->cfg.folds, "Number of folds")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--fold", a->fold, "Fold (1-based) whose head is exported")->capture_default_str();
    cmd->add_flag("--cv", a->cv, "Also cross-validate over every fold");
    cmd->add_option("--epochs", a->cfg.epochs, "Epochs")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", a->cfg.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--lr", a->cfg.learning_rate, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--loss", a->loss, "bce (binary) or cce (categorical)")
        ->capture_default_str()
        ->check(CLI::IsMember({"bce", "cce", "binary-cross-entropy", "categorical-cross-entropy"}));
    cmd->add_option("--positive-class", a->positive, "Positive class name (default: the first class)");
    cmd->add_option("--seed", a->cfg.seed, "Split, shuffle and initialisation seed")->capture_default_str();
    cmd->add_option("--cache-dir", a->cache_dir, "Feature cache directory");
    cmd->add_option("--threads", a->threads, "Worker threads (0 = all cores)")->capture_default_str();
    cmd->add_option("--report", a->report, "Write metrics (or the cross-validation report) as JSON");
    cmd->add_option("--log", a->log, "Write the per-epoch training log");
    cmd->callback([&ctx, a] { run_train(ctx, *a); });
  }
  {
    auto a = std::make_shared<EvalArgs>();
    auto* cmd = app.add_subcommand("eval", "Confusion matrix and accuracy/precision/recall/F1 of a classifier bundle");
    cmd->add_option("--model", a->model, "Classifier bundle")->required();
    cmd->add_option("--manifest", a->manifest, "Dataset manifest")->required();
    cmd->add_option("--partition", a->partition, "all, train, val or test")
        ->capture_default_str()
        ->check(CLI::IsMember({"all", "train", "val", "test"}));
    cmd->add_option("--folds", a->folds, "Number of folds of the split")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--fold", a->fold, "Fold (1-based) when a partition is chosen");
    cmd->add_option("--seed", a->seed, "Split seed")->capture_default_str();
    cmd->add_flag("--originals-only", a->originals_only, "Skip augmented items");
    cmd->add_option("--threads", a->threads, "Worker threads (0 = all cores)")->capture_default_str();
    cmd->add_option("--out", a->report, "Write the report as JSON");
    cmd->callback([&ctx, a] { run_eval(ctx, *a); });
  }
}

}  // namespace edgeinfer::cli
