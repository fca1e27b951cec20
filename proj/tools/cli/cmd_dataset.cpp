#include <ostream>

#include "common.hpp"

namespace edgeinfer::cli {

namespace fs = std::filesystem;

namespace {

void print_counts(std::ostream& out, const DatasetManifest& m) {
  const auto counts = m.class_counts();
  for (std::size_t c = 0; c < m.classes.size(); ++c) out << "  " << m.classes[c] << "\t" << counts[c] << "\n";
}

}  // namespace

void add_dataset_commands(CLI::App& app, Context& ctx) {
  auto* dataset = app.add_subcommand("dataset", "Build, augment and split dataset manifests");
  dataset->require_subcommand(1);

  {
    auto* cmd = dataset->add_subcommand("ingest", "Scan one folder per class into a manifest");
    auto root = std::make_shared<fs::path>();
    auto out = std::make_shared<fs::path>();
    auto no_verify = std::make_shared<bool>(false);
    cmd->add_option("root", *root, "Directory with one subdirectory per class")->required();
    cmd->add_option("--out", *out, "Manifest file to write")->required();
    cmd->add_flag("--no-verify", *no_verify, "Skip decoding each image");
    cmd->callback([&ctx, root, out, no_verify] {
      const auto r = ingest(*root, !*no_verify);
      save_manifest(r.manifest, *out);
      ctx.out << "ingested " << r.manifest.items.size() << " images in " << r.manifest.classes.size() << " classes\n";
      print_counts(ctx.out, r.manifest);
      for (const auto& s : r.skipped) ctx.err << "skipped (not an image): " << s << "\n";
      for (const auto& s : r.unreadable) ctx.err << "skipped (undecodable): " << s << "\n";
    });
  }
  {
    auto* cmd = dataset->add_subcommand("augment", "Add seeded rotation/contrast/zoom variants of every original");
    auto in = std::make_shared<fs::path>();
    auto out = std::make_shared<fs::path>();
    auto factor = std::make_shared<int>(14);
    auto seed = std::make_shared<std::uint64_t>(1);
    auto materialize_files = std::make_shared<bool>(false);
    cmd->add_option("--manifest", *in, "Input manifest")->required();
    cmd->add_option("--out", *out, "Output manifest")->required();
    cmd->add_option("--factor", *factor, "Items per original after augmentation (original included)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", *seed, "Augmentation seed")->capture_default_str();
    cmd->add_flag("--materialize", *materialize_files, "Also write the augmented PNG files");
    cmd->callback([&ctx, in, out, factor, seed, materialize_files] {
      const auto m = load_manifest(*in);
      auto a = augment(m, *factor, *seed);
      if (*materialize_files) materialize(a);
      save_manifest(a, *out);
      ctx.out << a.original_count() << " originals -> " << a.items.size() << " items at factor " << *factor << "\n";
      print_counts(ctx.out, a);
    });
  }
  {
    auto* cmd = dataset->add_subcommand("split", "Stratified 70/20/10 train/val/test assignment per fold");
    auto in = std::make_shared<fs::path>();
    auto out = std::make_shared<fs::path>();
    auto folds = std::make_shared<int>(5);
    auto seed = std::make_shared<std::uint64_t>(1);
    cmd->add_option("--manifest", *in, "Input manifest")->required();
    cmd->add_option("--out", *out, "Split table to write");
    cmd->add_option("--folds", *folds, "Number of folds")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--seed", *seed, "Shuffle seed")->capture_default_str();
    cmd->callback([&ctx, in, out, folds, seed] {
      const auto m = load_manifest(*in);
      const auto plan = split(m, *folds, *seed);
      ctx.out << "fold\tclass\ttrain\tval\ttest\t(originals)\n";
      for (int f = 0; f < plan.fold_count; ++f) {
        for (std::size_t c = 0; c < m.classes.size(); ++c) {
          std::size_t n[3] = {0, 0, 0};
          for (std::size_t i = 0; i < m.items.size(); ++i) {
            if (m.items[i].class_index == static_cast<int>(c) && m.items[i].origin == Origin::kOriginal) {
              ++n[static_cast<int>(plan.assignment[static_cast<std::size_t>(f)][i])];
            }
          }
          ctx.out << f + 1 << "\t" << m.classes[c] << "\t" << n[0] << "\t" << n[1] << "\t" << n[2] << "\n";
        }
      }
      if (!out->empty()) write_text(*out, split_table(m, plan));
    });
  }
  {
    auto* cmd = dataset->add_subcommand("synth", "Generate the synthetic two-class skin-lesion image set");
    auto out = std::make_shared<fs::path>();
    auto opts = std::make_shared<SynthOptions>();
    cmd->add_option("--out", *out, "Directory to create (manifest.tsv is written inside)")->required();
    cmd->add_option("--per-class", opts->per_class, "Images per class")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--size", opts->size, "Square image size")->capture_default_str()->check(CLI::Range(8, 4096));
    cmd->add_option("--seed", opts->seed, "Generator seed")->capture_default_str();
    cmd->callback([&ctx, out, opts] {
      const auto m = synthesize(*out, *opts);
      save_manifest(m, *out / "manifest.tsv");
      ctx.out << "wrote " << m.items.size() << " images and " << (*out / "manifest.tsv").string() << "\n";
      print_counts(ctx.out, m);
    });
  }
}

}  // namespace edgeinfer::cli
