#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "common.hpp"
#include "edgeinfer/engine.hpp"
#include "edgeinfer/image.hpp"
#include "edgeinfer/version.hpp"

namespace edgeinfer::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return kIoFailure;
    case ErrorCode::kInvalidTensor:
    case ErrorCode::kChecksumMismatch:
    case ErrorCode::kUnknownOp:
    case ErrorCode::kDanglingReference:
    case ErrorCode::kArityViolation:
    case ErrorCode::kCycle:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kDtypeMismatch:
    case ErrorCode::kUnsupportedVersion:
    case ErrorCode::kMalformedBundle: return kBadModel;
    case ErrorCode::kUndecodableImage:
    case ErrorCode::kUnsupportedFormat:
    case ErrorCode::kEmptyDataset:
    case ErrorCode::kEmptyClassDirectory:
    case ErrorCode::kClassTooSmall:
    case ErrorCode::kParseError: return kBadData;
    case ErrorCode::kUnsupportedCast:
    case ErrorCode::kInvalidQuantParams:
    case ErrorCode::kMissingCalibration: return kQuantization;
    case ErrorCode::kMissingFeatureNode:
    case ErrorCode::kFeatureNodeConsumed:
    case ErrorCode::kWidthMismatch:
    case ErrorCode::kDegenerateData:
    case ErrorCode::kLengthMismatch:
    case ErrorCode::kLabelOutOfRange: return kTraining;
    case ErrorCode::kEmptyMatrix:
    case ErrorCode::kMissingOriginal:
    case ErrorCode::kEmptyWindow: return kReport;
    case ErrorCode::kInvalidArgument: return kBadArgument;
  }
  return kInternal;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'", path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot read '" + path.string() + "'", path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "'" + dir.string() + "' is not a directory", dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && has_image_extension(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Tensor> load_inputs(const std::optional<fs::path>& dir, const std::optional<fs::path>& manifest,
                                std::size_t count, const PreprocessSpec& spec) {
  std::vector<Tensor> out;
  if (manifest) {
    const auto m = load_manifest(*manifest);
    const std::size_t n = count == 0 ? m.items.size() : std::min(count, m.items.size());
    for (std::size_t i = 0; i < n; ++i) out.push_back(preprocess(load_item(m, i), spec));
  } else if (dir) {
    const auto files = image_files(*dir);
    const std::size_t n = count == 0 ? files.size() : std::min(count, files.size());
    for (std::size_t i = 0; i < n; ++i) out.push_back(preprocess(read_image(files[i]), spec));
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyDataset, "no input images found");
  return out;
}

int class_index(const std::vector<std::string>& classes, const std::string& name, int fallback) {
  if (name.empty()) return fallback;
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw Error(ErrorCode::kInvalidArgument, "unknown class '" + name + "'", name);
  return static_cast<int>(it - classes.begin());
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Edge image-classification toolkit: datasets, head training, quantization, inference, "
               "evaluation, benchmarking and serving.",
               "edgeinfer"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.footer("Exit codes: 0 ok, 1 internal, 2 usage, 3 I/O, 4 model, 5 data, 6 quantization, 7 training, "
             "8 report, 9 argument.");

  Context ctx{out, err};
  add_model_commands(app, ctx);
  add_dataset_commands(app, ctx);
  add_train_commands(app, ctx);
  add_quantize_command(app, ctx);
  add_run_commands(app, ctx);

  std::vector<std::string> argv_store{"edgeinfer"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error [io-error]: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error [internal]: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}

}  // namespace edgeinfer::cli
