#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edgeinfer/bundle.hpp"
#include "edgeinfer/error.hpp"
#include "edgeinfer/datakit.hpp"
#include "edgeinfer/tensor.hpp"

namespace edgeinfer::cli {

struct Context {
  std::ostream& out;
  std::ostream& err;
};

void add_model_commands(CLI::App& app, Context& ctx);
void add_dataset_commands(CLI::App& app, Context& ctx);
void add_train_commands(CLI::App& app, Context& ctx);
void add_quantize_command(CLI::App& app, Context& ctx);
void add_run_commands(CLI::App& app, Context& ctx);

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Image files under `dir` (recursive, sorted by path).
std::vector<std::filesystem::path> image_files(const std::filesystem::path& dir);

/// Preprocessed tensors for the first `count` images (0 = all) of either a
/// directory or a manifest.
std::vector<Tensor> load_inputs(const std::optional<std::filesystem::path>& dir,
                                const std::optional<std::filesystem::path>& manifest, std::size_t count,
                                const PreprocessSpec& spec);

/// Index of `name` in `classes`, or the bundle default when empty.
int class_index(const std::vector<std::string>& classes, const std::string& name, int fallback);

std::string percent(double fraction);

}  // namespace edgeinfer::cli
