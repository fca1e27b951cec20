#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgeinfer/bundle.hpp"
#include "edgeinfer/tensor.hpp"

namespace edgeinfer {

struct BenchOptions {
  std::size_t batch_size = 32;
  /// Discarded batch forwards before timing starts.
  int warmup = 3;
  /// Timed passes over the whole image set.
  int reps = 10;
  /// Concurrent clients, each running every timed pass.
  unsigned clients = 1;
};

struct BenchReport {
  std::string variant;
  std::size_t container_bytes = 0;
  std::size_t payload_bytes = 0;
  std::size_t batch_size = 0;
  std::size_t image_count = 0;
  std::size_t batch_count = 0;
  int warmup = 0;
  int reps = 0;
  unsigned clients = 1;
  /// Timed batch forwards that completed.
  std::size_t timed_batches = 0;
  double total_seconds = 0.0;
  double ms_per_batch = 0.0;
  double ms_per_image = 0.0;
  double images_per_second = 0.0;
  bool partial = false;
  std::string error;
};

/// ceil(images / batch_size).
std::size_t batch_count(std::size_t images, std::size_t batch_size);

using BatchRunner = std::function<void(const Tensor& batch)>;

/// Times `run` over pre-stacked batches of `images`. Timing starts after the
/// inputs are already tensors, so decoding never counts. An exception from
/// `run` stops the measurement and yields a partial report.
BenchReport bench_runner(std::string variant, std::span<const Tensor> images, const BenchOptions& options,
                         const BatchRunner& run);

/// Model forward benchmark; sizes come from `size_of`.
BenchReport bench(const ModelBundle& b, std::span<const Tensor> images, const BenchOptions& options = {});

struct VariantComparison {
  std::string variant;
  double container_ratio = 0.0;
  double payload_ratio = 0.0;
  double latency_ratio = 0.0;
  double throughput_ratio = 0.0;
};

/// Ratios of every report against the one named `original`.
std::vector<VariantComparison> compare_variants(std::span<const BenchReport> reports,
                                                const std::string& original = "fp32");

std::string bench_text(std::span<const BenchReport> reports);
std::string bench_json(std::span<const BenchReport> reports);
std::string comparison_text(std::span<const VariantComparison> rows);
std::string comparison_json(std::span<const VariantComparison> rows);

// ---------------------------------------------------------------------------
// Power logs

/// Microseconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

/// Accepts YYYY-MM-DDTHH:MM:SS with optional fraction and optional zone
/// (Z or +HH:MM / -HH:MM); no zone means UTC. A space may replace the T.
std::optional<Timestamp> parse_iso8601(std::string_view text);
std::string format_iso8601(Timestamp t);

struct PowerSample {
  Timestamp time = 0;
  double watts = 0.0;
};

/// One sample per line: "<ISO-8601 timestamp>,<watts>". Blank lines and
/// lines starting with '#' are ignored. Errors name the 1-based line.
std::vector<PowerSample> parse_power_log(const std::string& text);

/// Half-open interval [start, end).
struct PowerWindow {
  std::string label;
  Timestamp start = 0;
  Timestamp end = 0;
};

/// "<start>/<end>" with ISO-8601 endpoints.
PowerWindow parse_window(std::string label, std::string_view text);

inline constexpr std::size_t kMinWindowSamples = 3;

struct WindowMean {
  std::string label;
  double watts = 0.0;
  std::size_t samples = 0;
  double ratio = 1.0;
};

struct PowerReport {
  WindowMean idle;
  /// Original first, then the other variants in window order.
  std::vector<WindowMean> variants;
  std::string original;
};

/// Mean watts per window; each variant ratio is its mean over the original's.
PowerReport power_report(std::span<const PowerSample> samples, const PowerWindow& idle,
                         std::span<const PowerWindow> variants, const std::string& original);

std::string power_text(const PowerReport& r);
std::string power_json(const PowerReport& r);

}  // namespace edgeinfer
