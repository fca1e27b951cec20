#include <cstdio>
#include <ostream>
#include <set>

#include "common.hpp"
#include "edgeinfer/quantizer.hpp"

namespace edgeinfer::cli {

namespace fs = std::filesystem;

namespace {

struct QuantizeArgs {
  fs::path in, out, profile_out;
  std::optional<fs::path> calib_dir, calib_manifest;
  std::string precision = "int8";
  std::size_t calib_count = 100;
  std::string method = "minmax";
  double percentile = 99.9;
  std::vector<std::string> exclude;
  unsigned threads = 0;
};

std::string ratio_line(const ModelBundle& original, const ModelBundle& variant) {
  const auto a = size_of(original), b = size_of(variant);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: payload %zu -> %zu bytes (ratio %.3f), container ratio %.3f",
                variant.meta.variant.c_str(), a.payload_bytes, b.payload_bytes,
                static_cast<double>(b.payload_bytes) / static_cast<double>(a.payload_bytes),
                static_cast<double>(b.container_bytes) / static_cast<double>(a.container_bytes));
  return buf;
}

void run_quantize(Context& ctx, const QuantizeArgs& a) {
  const auto original = load_bundle(a.in);
  if (original.meta.variant != "fp32") {
    throw Error(ErrorCode::kInvalidArgument, "quantize expects an original fp32 bundle, got '" + original.meta.variant + "'");
  }
  const std::set<std::string> excluded(a.exclude.begin(), a.exclude.end());
  const bool needs_calibration = a.precision == "int8" || a.precision == "all";
  if (needs_calibration && !a.calib_dir && !a.calib_manifest) {
    throw Error(ErrorCode::kMissingCalibration, "int8 needs --calib-dir or --calib-manifest");
  }
  CalibrationOptions co;
  co.method = a.method == "percentile" ? CalibrationMethod::kPercentile : CalibrationMethod::kMinMax;
  co.percentile = a.percentile;
  co.threads = a.threads;

  const auto fused = fuse_constants(original);
  std::vector<ModelBundle> written;
  CalibrationProfile profile;
  if (needs_calibration) {
    const auto inputs = load_inputs(a.calib_dir, a.calib_manifest, a.calib_count, original.meta.preprocess);
    profile = calibrate(fused, inputs, co);
    ctx.out << "calibrated on " << inputs.size() << " images\n";
    if (!a.profile_out.empty()) write_text(a.profile_out, profile_table(profile));
  }
  auto make_int8 = [&] {
    const auto plan = make_plan(fused, DType::kINT8, &profile, excluded);
    if (!plan.excluded.empty()) {
      ctx.out << "kept at fp32:";
      for (const auto& id : plan.excluded) ctx.out << " " << id;
      ctx.out << "\n";
    }
    return quantize_int8(fused, profile, plan);
  };
  auto make_fp16 = [&] { return convert_fp16(fused, make_plan(fused, DType::kFP16, nullptr, excluded)); };

  if (a.precision == "all") {
    const auto stem = original.meta.name.empty() ? std::string("model") : original.meta.name;
    save_bundle(original, a.out / stem);
    for (const auto& v : {fused, make_fp16(), make_int8()}) {
      save_bundle(v, a.out / (stem + variant_suffix(v.meta.variant)));
      ctx.out << ratio_line(original, v) << "\n";
    }
    ctx.out << "wrote 4 variants under " << a.out.string() << "\n";
    return;
  }
  const auto v = a.precision == "fp32opt" ? fused : a.precision == "fp16" ? make_fp16() : make_int8();
  save_bundle(v, a.out);
  ctx.out << ratio_line(original, v) << "\nwrote " << a.out.string() << "\n";
}

}  // namespace

void add_quantize_command(CLI::App& app, Context& ctx) {
  auto a = std::make_shared<QuantizeArgs>();
  auto* cmd = app.add_subcommand("quantize", "Derive fused FP32, FP16 or INT8 variants of a bundle");
  cmd->add_option("--in", a->in, "Original fp32 bundle")->required();
  cmd->add_option("--out", a->out, "Output bundle directory (a parent directory with --precision all)")->required();
  cmd->add_option("--precision", a->precision, "fp32opt, fp16, int8 or all")
      ->capture_default_str()
      ->check(CLI::IsMember({"fp32opt", "fp16", "int8", "all"}));
  auto* dir = cmd->add_option("--calib-dir", a->calib_dir, "Directory of calibration images");
  cmd->add_option("--calib-manifest", a->calib_manifest, "Manifest whose items calibrate")->excludes(dir);
  cmd->add_option("--calib-count", a->calib_count, "Calibration images used (0 = all)")->capture_default_str();
  cmd->add_option("--method", a->method, "minmax or percentile")
      ->capture_default_str()
      ->check(CLI::IsMember({"minmax", "percentile"}));
  cmd->add_option("--percentile", a->percentile, "Magnitude percentile for --method percentile")
      ->capture_default_str()
      ->check(CLI::Range(50.0, 100.0));
  cmd->add_option("--exclude", a->exclude, "Node ids kept at fp32 (repeatable)");
  cmd->add_option("--profile", a->profile_out, "Write the calibration table here");
  cmd->add_option("--threads", a->threads, "Calibration threads (0 = all cores)")->capture_default_str();
  cmd->callback([&ctx, a] { run_quantize(ctx, *a); });
}

}  // namespace edgeinfer::cli
