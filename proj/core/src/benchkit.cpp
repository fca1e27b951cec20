#include "edgeinfer/benchkit.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "edgeinfer/engine.hpp"
#include "edgeinfer/error.hpp"

namespace edgeinfer {

using json = nlohmann::ordered_json;
using steady = std::chrono::steady_clock;

std::size_t batch_count(std::size_t images, std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  return (images + batch_size - 1) / batch_size;
}

namespace {

double seconds(steady::duration d) { return std::chrono::duration<double>(d).count(); }

void finish(BenchReport& r, double busy_seconds) {
  if (r.timed_batches == 0 || r.total_seconds <= 0.0) return;
  const double effective_batch = static_cast<double>(r.image_count) / static_cast<double>(r.batch_count);
  const double images = static_cast<double>(r.timed_batches) * effective_batch;
  // One client: latency is wall time per batch, so throughput and latency are
  // exact reciprocals. Several clients: latency is the mean busy time.
  const double per_batch = r.clients == 1 ? r.total_seconds / static_cast<double>(r.timed_batches)
                                          : busy_seconds / static_cast<double>(r.timed_batches);
  r.ms_per_batch = per_batch * 1e3;
  r.ms_per_image = r.ms_per_batch / effective_batch;
  r.images_per_second = images / r.total_seconds;
}

}  // namespace

BenchReport bench_runner(std::string variant, std::span<const Tensor> images, const BenchOptions& o,
                         const BatchRunner& run) {
  if (images.empty()) throw Error(ErrorCode::kInvalidArgument, "benchmark needs at least one image");
  if (o.warmup < 1) throw Error(ErrorCode::kInvalidArgument, "warmup must be at least 1");
  if (o.reps < 1) throw Error(ErrorCode::kInvalidArgument, "reps must be at least 1");
  if (o.clients < 1) throw Error(ErrorCode::kInvalidArgument, "clients must be at least 1");
  BenchReport r;
  r.variant = std::move(variant);
  r.batch_size = o.batch_size;
  r.image_count = images.size();
  r.batch_count = batch_count(images.size(), o.batch_size);
  r.warmup = o.warmup;
  r.reps = o.reps;
  r.clients = o.clients;

  std::vector<Tensor> batches;
  batches.reserve(r.batch_count);
  for (std::size_t s = 0; s < images.size(); s += o.batch_size) {
    batches.push_back(stack_batch(images.subspan(s, std::min(o.batch_size, images.size() - s))));
  }

  try {
    for (int w = 0; w < o.warmup; ++w) run(batches[static_cast<std::size_t>(w) % batches.size()]);
  } catch (const std::exception& e) {
    r.partial = true;
    r.error = e.what();
    return r;
  }

  std::atomic<std::size_t> done{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  double busy = 0.0;
  auto client = [&] {
    double local = 0.0;
    try {
      for (int rep = 0; rep < o.reps && !failed; ++rep) {
        for (const auto& batch : batches) {
          if (failed) break;
          const auto t0 = steady::now();
          run(batch);
          local += seconds(steady::now() - t0);
          ++done;
        }
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(mu);
      if (!failed.exchange(true)) r.error = e.what();
    }
    std::lock_guard lock(mu);
    busy += local;
  };

  const auto start = steady::now();
  if (o.clients == 1) {
    client();
  } else {
    std::vector<std::thread> pool;
    for (unsigned c = 0; c < o.clients; ++c) pool.emplace_back(client);
    for (auto& t : pool) t.join();
  }
  r.total_seconds = seconds(steady::now() - start);
  r.timed_batches = done.load();
  r.partial = failed.load();
  finish(r, busy);
  return r;
}

BenchReport bench(const ModelBundle& b, std::span<const Tensor> images, const BenchOptions& options) {
  const auto size = size_of(b);
  auto r = bench_runner(b.meta.variant, images, options, [&](const Tensor& batch) { run_outputs(b, batch); });
  r.container_bytes = size.container_bytes;
  r.payload_bytes = size.payload_bytes;
  return r;
}

std::vector<VariantComparison> compare_variants(std::span<const BenchReport> reports, const std::string& original) {
  if (reports.size() < 2) throw Error(ErrorCode::kInvalidArgument, "comparison needs at least two reports");
  const auto it = std::find_if(reports.begin(), reports.end(), [&](const BenchReport& r) { return r.variant == original; });
  if (it == reports.end()) throw Error(ErrorCode::kMissingOriginal, "no report for original variant '" + original + "'");
  const auto& base = *it;
  auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  std::vector<VariantComparison> rows;
  for (const auto& r : reports) {
    rows.push_back({r.variant, ratio(static_cast<double>(r.container_bytes), static_cast<double>(base.container_bytes)),
                    ratio(static_cast<double>(r.payload_bytes), static_cast<double>(base.payload_bytes)),
                    ratio(r.ms_per_image, base.ms_per_image), ratio(r.images_per_second, base.images_per_second)});
  }
  return rows;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string bench_text(std::span<const BenchReport> reports) {
  std::string out = "variant\tcontainer_bytes\tpayload_bytes\tbatch\timages\tbatches\tms/batch\tms/image\timages/s\n";
  for (const auto& r : reports) {
    out += r.variant + "\t" + std::to_string(r.container_bytes) + "\t" + std::to_string(r.payload_bytes) + "\t" +
           std::to_string(r.batch_size) + "\t" + std::to_string(r.image_count) + "\t" + std::to_string(r.batch_count) +
           "\t" + fixed(r.ms_per_batch, 3) + "\t" + fixed(r.ms_per_image, 4) + "\t" + fixed(r.images_per_second, 1);
    if (r.partial) out += "\tPARTIAL: " + r.error;
    out += "\n";
  }
  return out;
}

std::string bench_json(std::span<const BenchReport> reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    json j{{"variant", r.variant},
           {"container_bytes", r.container_bytes},
           {"payload_bytes", r.payload_bytes},
           {"batch_size", r.batch_size},
           {"image_count", r.image_count},
           {"batch_count", r.batch_count},
           {"warmup", r.warmup},
           {"reps", r.reps},
           {"clients", r.clients},
           {"timed_batches", r.timed_batches},
           {"total_seconds", r.total_seconds},
           {"ms_per_batch", r.ms_per_batch},
           {"ms_per_image", r.ms_per_image},
           {"images_per_second", r.images_per_second},
           {"partial", r.partial}};
    if (r.partial) j["error"] = r.error;
    arr.push_back(j);
  }
  return json{{"reports", arr}}.dump(2) + "\n";
}

std::string comparison_text(std::span<const VariantComparison> rows) {
  std::string out = "variant\tcontainer\tpayload\tlatency\tthroughput\n";
  for (const auto& r : rows) {
    out += r.variant + "\t" + fixed(r.container_ratio, 3) + "\t" + fixed(r.payload_ratio, 3) + "\t" +
           fixed(r.latency_ratio, 3) + "\t" + fixed(r.throughput_ratio, 3) + "\n";
  }
  return out;
}

std::string comparison_json(std::span<const VariantComparison> rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"variant", r.variant},
                   {"container_ratio", r.container_ratio},
                   {"payload_ratio", r.payload_ratio},
                   {"latency_ratio", r.latency_ratio},
                   {"throughput_ratio", r.throughput_ratio}});
  }
  return json{{"comparison", arr}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Power logs

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool take_int(std::string_view& s, std::size_t digits, int& out) {
  if (s.size() < digits) return false;
  int v = 0;
  for (std::size_t i = 0; i < digits; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  s.remove_prefix(digits);
  return true;
}

bool take_char(std::string_view& s, char c) {
  if (s.empty() || s.front() != c) return false;
  s.remove_prefix(1);
  return true;
}

}  // namespace

std::optional<Timestamp> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  s = trim(s);
  int y, mo, d, h, mi, sec;
  if (!take_int(s, 4, y) || !take_char(s, '-') || !take_int(s, 2, mo) || !take_char(s, '-') || !take_int(s, 2, d)) {
    return std::nullopt;
  }
  if (!take_char(s, 'T') && !take_char(s, ' ')) return std::nullopt;
  if (!take_int(s, 2, h) || !take_char(s, ':') || !take_int(s, 2, mi) || !take_char(s, ':') || !take_int(s, 2, sec)) {
    return std::nullopt;
  }
  std::int64_t micros = 0;
  if (take_char(s, '.') || take_char(s, ',')) {
    std::size_t n = 0;
    std::int64_t scale = 100000;
    while (!s.empty() && s.front() >= '0' && s.front() <= '9') {
      micros += (s.front() - '0') * scale;
      scale /= 10;
      s.remove_prefix(1);
      ++n;
    }
    if (n == 0) return std::nullopt;
  }
  int offset_min = 0;
  if (take_char(s, 'Z')) {
  } else if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    const int sign = s.front() == '+' ? 1 : -1;
    s.remove_prefix(1);
    int oh, om;
    if (!take_int(s, 2, oh) || !take_char(s, ':') || !take_int(s, 2, om) || oh > 23 || om > 59) return std::nullopt;
    offset_min = sign * (oh * 60 + om);
  }
  if (!s.empty()) return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  const std::int64_t secs = static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec - offset_min * 60;
  return secs * 1000000 + micros;
}

std::string format_iso8601(Timestamp t) {
  using namespace std::chrono;
  std::int64_t secs = t / 1000000, micros = t % 1000000;
  if (micros < 0) {
    micros += 1000000;
    --secs;
  }
  std::int64_t days = secs / 86400, rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem / 60 % 60), static_cast<int>(rem % 60));
  std::string out = buf;
  if (micros != 0) {
    std::snprintf(buf, sizeof buf, ".%06d", static_cast<int>(micros));
    out += buf;
  }
  return out + "Z";
}

std::vector<PowerSample> parse_power_log(const std::string& text) {
  std::vector<PowerSample> out;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kParseError, "power log line " + std::to_string(line_no) + ": " + why,
                   std::to_string(line_no));
    };
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw fail("expected '<timestamp>,<watts>'");
    const auto ts = parse_iso8601(line.substr(0, comma));
    if (!ts) throw fail("bad ISO-8601 timestamp '" + std::string(trim(line.substr(0, comma))) + "'");
    const auto w = trim(line.substr(comma + 1));
    double watts = 0.0;
    const auto [end, ec] = std::from_chars(w.data(), w.data() + w.size(), watts);
    if (ec != std::errc{} || end != w.data() + w.size()) throw fail("bad watts value '" + std::string(w) + "'");
    if (!(watts > 0.0)) throw fail("watts must be positive");
    out.push_back({*ts, watts});
  }
  return out;
}

PowerWindow parse_window(std::string label, std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw Error(ErrorCode::kParseError, "window '" + label + "' must be '<start>/<end>'", label);
  }
  const auto a = parse_iso8601(text.substr(0, slash)), b = parse_iso8601(text.substr(slash + 1));
  if (!a || !b) throw Error(ErrorCode::kParseError, "window '" + label + "' has a bad ISO-8601 endpoint", label);
  if (*b <= *a) throw Error(ErrorCode::kInvalidArgument, "window '" + label + "' ends before it starts", label);
  return {std::move(label), *a, *b};
}

PowerReport power_report(std::span<const PowerSample> samples, const PowerWindow& idle,
                         std::span<const PowerWindow> variants, const std::string& original) {
  std::vector<const PowerWindow*> all{&idle};
  for (const auto& w : variants) all.push_back(&w);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i]->end <= all[i]->start) {
      throw Error(ErrorCode::kInvalidArgument, "window '" + all[i]->label + "' is empty or inverted", all[i]->label);
    }
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      if (all[i]->start < all[j]->end && all[j]->start < all[i]->end) {
        throw Error(ErrorCode::kInvalidArgument, "windows '" + all[i]->label + "' and '" + all[j]->label + "' overlap");
      }
      if (all[i]->label == all[j]->label) throw Error(ErrorCode::kInvalidArgument, "duplicate window '" + all[i]->label + "'");
    }
  }
  auto mean_of = [&](const PowerWindow& w) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
      if (s.time >= w.start && s.time < w.end) {
        sum += s.watts;
        ++n;
      }
    }
    if (n < kMinWindowSamples) {
      throw Error(ErrorCode::kEmptyWindow, "window '" + w.label + "' holds " + std::to_string(n) + " samples; at least " +
                                               std::to_string(kMinWindowSamples) + " are required",
                  w.label);
    }
    return WindowMean{w.label, sum / static_cast<double>(n), n, 1.0};
  };
  const auto it = std::find_if(variants.begin(), variants.end(), [&](const PowerWindow& w) { return w.label == original; });
  if (it == variants.end()) throw Error(ErrorCode::kMissingOriginal, "no window for original variant '" + original + "'");

  PowerReport r;
  r.original = original;
  r.idle = mean_of(idle);
  r.idle.ratio = 1.0;
  const auto base = mean_of(*it);
  r.variants.push_back(base);
  for (const auto& w : variants) {
    if (w.label == original) continue;
    auto m = mean_of(w);
    m.ratio = m.watts / base.watts;
    r.variants.push_back(m);
  }
  return r;
}

std::string power_text(const PowerReport& r) {
  std::string out = "window\tsamples\tmean_watts\tratio\n";
  out += r.idle.label + "\t" + std::to_string(r.idle.samples) + "\t" + fixed(r.idle.watts, 3) + "\t-\n";
  for (const auto& v : r.variants) {
    out += v.label + "\t" + std::to_string(v.samples) + "\t" + fixed(v.watts, 3) + "\t" + fixed(v.ratio, 2) + "\n";
  }
  return out;
}

std::string power_json(const PowerReport& r) {
  json vs = json::array();
  for (const auto& v : r.variants) {
    vs.push_back({{"variant", v.label}, {"samples", v.samples}, {"mean_watts", v.watts}, {"ratio", v.ratio}});
  }
  json j{{"idle", {{"label", r.idle.label}, {"samples", r.idle.samples}, {"mean_watts", r.idle.watts}}},
         {"original", r.original},
         {"variants", vs}};
  return j.dump(2) + "\n";
}

}  // namespace edgeinfer
