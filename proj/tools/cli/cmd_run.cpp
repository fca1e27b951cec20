#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <ostream>

#include "common.hpp"
#include "edgeinfer/benchkit.hpp"
#include "edgeinfer/engine.hpp"
#include "edgeinfer/gateway.hpp"
#include "edgeinfer/image.hpp"

namespace edgeinfer::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct InferArgs {
  fs::path model, image;
  bool as_json = false;
};

void run_infer(Context& ctx, const InferArgs& a) {
  const auto b = load_bundle(a.model);
  const auto bytes = read_text(a.image);
  const auto p = predict(b, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  if (a.as_json) {
    ctx.out << json{{"label", p.label},
                    {"class_index", p.class_index},
                    {"confidence", p.confidence},
                    {"model", b.meta.variant},
                    {"latency_ms", p.latency_ms}}
                   .dump()
            << "\n";
    return;
  }
  char ms[32];
  std::snprintf(ms, sizeof ms, "%.3f", p.latency_ms);
  ctx.out << p.label << " " << percent(p.confidence) << " (" << b.meta.variant << ", " << ms << " ms)\n";
}

struct BenchArgs {
  std::vector<fs::path> models;
  std::optional<fs::path> models_dir, images, manifest;
  fs::path report;
  std::size_t count = 0;
  BenchOptions options;
  std::string original = "fp32";
};

void run_bench(Context& ctx, const BenchArgs& a) {
  std::vector<ModelBundle> bundles;
  if (a.models_dir) {
    const auto registry = VariantRegistry::load(*a.models_dir);
    for (const auto& v : registry.entries()) bundles.push_back(v.bundle);
  }
  for (const auto& p : a.models) bundles.push_back(load_bundle(p));
  if (bundles.empty()) throw Error(ErrorCode::kInvalidArgument, "give --model or --models-dir");
  if (!a.images && !a.manifest) throw Error(ErrorCode::kInvalidArgument, "give --images or --manifest");

  const auto& spec = bundles.front().meta.preprocess;
  for (const auto& b : bundles) {
    if (b.meta.preprocess != spec) throw Error(ErrorCode::kInvalidArgument, "benchmarked bundles preprocess differently");
  }
  const auto inputs = load_inputs(a.images, a.manifest, a.count, spec);
  ctx.out << inputs.size() << " images, batch " << a.options.batch_size << " -> "
          << batch_count(inputs.size(), a.options.batch_size) << " batches per pass\n";

  std::vector<BenchReport> reports;
  for (const auto& b : bundles) reports.push_back(bench(b, inputs, a.options));
  ctx.out << bench_text(reports);
  const bool can_compare =
      reports.size() >= 2 &&
      std::any_of(reports.begin(), reports.end(), [&](const BenchReport& r) { return r.variant == a.original; });
  json doc = json::parse(bench_json(reports));
  if (can_compare) {
    const auto rows = compare_variants(reports, a.original);
    ctx.out << "\nratios against " << a.original << "\n" << comparison_text(rows);
    doc["comparison"] = json::parse(comparison_json(rows))["comparison"];
  }
  if (!a.report.empty()) write_text(a.report, doc.dump(2) + "\n");
  for (const auto& r : reports) {
    if (r.partial) throw Error(ErrorCode::kInvalidArgument, "benchmark of '" + r.variant + "' stopped early: " + r.error);
  }
}

struct PowerArgs {
  fs::path log, report;
  std::string idle;
  std::vector<std::string> windows;
  std::string original;
};

void run_power(Context& ctx, const PowerArgs& a) {
  const auto samples = parse_power_log(read_text(a.log));
  const auto idle = parse_window("idle", a.idle);
  std::vector<PowerWindow> windows;
  for (const auto& w : a.windows) {
    const auto eq = w.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kInvalidArgument, "--window must be NAME=START/END, got '" + w + "'");
    }
    windows.push_back(parse_window(w.substr(0, eq), std::string_view(w).substr(eq + 1)));
  }
  if (windows.empty()) throw Error(ErrorCode::kInvalidArgument, "at least one --window is required");
  const auto original = a.original.empty() ? windows.front().label : a.original;
  const auto r = power_report(samples, idle, windows, original);
  ctx.out << power_text(r);
  if (!a.report.empty()) write_text(a.report, power_json(r));
}

}  // namespace

void add_run_commands(CLI::App& app, Context& ctx) {
  {
    auto a = std::make_shared<InferArgs>();
    auto* cmd = app.add_subcommand("infer", "Classify one image");
    cmd->add_option("--model", a->model, "Classifier bundle")->required();
    cmd->add_option("--image", a->image, "PNG or JPEG file")->required();
    cmd->add_flag("--json", a->as_json, "Print a JSON object instead of one line");
    cmd->callback([&ctx, a] { run_infer(ctx, *a); });
  }
  {
    auto a = std::make_shared<BenchArgs>();
    auto* cmd = app.add_subcommand("bench", "Model size, latency and throughput per variant");
    cmd->add_option("--model", a->models, "Bundle to benchmark (repeatable)");
    cmd->add_option("--models-dir", a->models_dir, "Benchmark every bundle in this directory");
    auto* images = cmd->add_option("--images", a->images, "Directory of benchmark images");
    cmd->add_option("--manifest", a->manifest, "Manifest whose items are the benchmark images")->excludes(images);
    cmd->add_option("--count", a->count, "Images used (0 = all)")->capture_default_str();
    cmd->add_option("--batch-size", a->options.batch_size, "Images per forward")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--warmup", a->options.warmup, "Discarded batch forwards")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--reps", a->options.reps, "Timed passes over all images")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--clients", a->options.clients, "Concurrent clients")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--original", a->original, "Variant the ratios are taken against")->capture_default_str();
    cmd->add_option("--out", a->report, "Write the reports as JSON");
    cmd->callback([&ctx, a] { run_bench(ctx, *a); });
  }
  {
    auto a = std::make_shared<PowerArgs>();
    auto* cmd = app.add_subcommand("power-report", "Mean watts per window from a '<ISO-8601>,<watts>' log");
    cmd->add_option("--log", a->log, "Watt log file")->required();
    cmd->add_option("--idle", a->idle, "Idle window START/END")->required();
    cmd->add_option("--window", a->windows, "Inference window NAME=START/END (repeatable)")->required();
    cmd->add_option("--original", a->original, "Window the ratios are taken against (default: the first)");
    cmd->add_option("--out", a->report, "Write the report as JSON");
    cmd->callback([&ctx, a] { run_power(ctx, *a); });
  }
  {
    auto flags = std::make_shared<GatewayOverrides>();
    auto workers = std::make_shared<unsigned>(8);
    auto* cmd = app.add_subcommand("serve", "HTTP API and browser UI (flags override EDGEINFER_* variables)");
    cmd->add_option("--host", flags->host, "Bind address (env EDGEINFER_HOST, default 0.0.0.0)");
    cmd->add_option("--port", flags->port, "Port (env EDGEINFER_PORT, default 8080)")->check(CLI::Range(0, 65535));
    cmd->add_option("--models-dir", flags->models_dir, "Directory of bundles (env EDGEINFER_MODELS_DIR, default models)");
    cmd->add_option("--static-dir", flags->static_dir, "UI assets served under / (env EDGEINFER_STATIC_DIR)");
    cmd->add_option("--max-concurrent", flags->max_concurrent,
                    "Simultaneous inferences (env EDGEINFER_MAX_CONCURRENT, default one per core)");
    cmd->add_option("--audit-log", flags->audit_log, "Append image hashes of predictions here (env EDGEINFER_AUDIT_LOG)");
    cmd->add_option("--workers", *workers, "HTTP worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->callback([&ctx, flags, workers] {
      auto settings = resolve_settings(*flags);
      settings.workers = *workers;
      Gateway gw(VariantRegistry::load(settings.models_dir), settings);
      const int port = gw.bind();
      ctx.out << "serving " << gw.registry().size() << " variants on http://" << settings.host << ":" << port << "\n";
      ctx.out.flush();
      gw.serve();
    });
  }
}

}  // namespace edgeinfer::cli
