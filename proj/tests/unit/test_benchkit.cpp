#include <gtest/gtest.h>

#include <json.hpp>
#include <thread>

#include "edgeinfer/benchkit.hpp"
#include "edgeinfer/fixtures.hpp"
#include "support/gen.hpp"
#include "support/helpers.hpp"
#include "support/power_fixture.hpp"

using namespace edgeinfer;

namespace {

std::vector<Tensor> tiny_images(std::size_t n) {
  testgen::Gen g(1);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(g.tensor({1, 2, 2, 3}));
  return out;
}

double product(const BenchReport& r) { return r.images_per_second * r.ms_per_image / 1000.0; }

}  // namespace

TEST(Benchkit, BatchCountRoundsUp) {
  EXPECT_EQ(batch_count(228, 32), 8u);
  EXPECT_EQ(batch_count(224, 32), 7u);
  EXPECT_EQ(batch_count(1, 32), 1u);
  EXPECT_EQ(batch_count(0, 32), 0u);
  testgen::Gen g(2);
  for (int i = 0; i < 1000; ++i) {
    const auto n = static_cast<std::size_t>(g.range(0, 5000)), b = static_cast<std::size_t>(g.range(1, 300));
    const auto k = batch_count(n, b);
    EXPECT_GE(k * b, n);
    if (k > 0) EXPECT_LT((k - 1) * b, n);
  }
}

TEST(Benchkit, SleepingStubIsSelfConsistent) {
  const auto images = tiny_images(228);
  std::vector<std::size_t> sizes;
  const auto r = bench_runner("stub", images, {.batch_size = 32, .warmup = 2, .reps = 2},
                              [&](const Tensor& batch) {
                                sizes.push_back(static_cast<std::size_t>(batch.dim(0)));
                                std::this_thread::sleep_for(std::chrono::milliseconds(10));
                              });
  EXPECT_EQ(r.batch_count, 8u);
  EXPECT_EQ(r.timed_batches, 16u);
  EXPECT_EQ(sizes.size(), 18u);
  EXPECT_EQ(sizes.back(), 228u - 7 * 32);
  EXPECT_FALSE(r.partial);
  EXPECT_GE(r.ms_per_batch, 10.0);
  EXPECT_LT(r.ms_per_batch, 40.0);
  EXPECT_NEAR(r.ms_per_image * 228, r.ms_per_batch * 8, 1e-6 * r.ms_per_batch);
  EXPECT_NEAR(product(r), 1.0, 0.05);
}

TEST(Benchkit, RandomShapesStaySelfConsistent) {
  testgen::Gen g(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto n = static_cast<std::size_t>(g.range(1, 80));
    const auto images = tiny_images(n);
    const BenchOptions opts{.batch_size = static_cast<std::size_t>(g.range(1, 40)),
                            .warmup = static_cast<int>(g.range(1, 3)),
                            .reps = static_cast<int>(g.range(1, 3))};
    const auto r = bench_runner("stub", images, opts, [](const Tensor&) {
      std::this_thread::sleep_for(std::chrono::microseconds(300));
    });
    EXPECT_EQ(r.timed_batches, batch_count(n, opts.batch_size) * static_cast<std::size_t>(opts.reps));
    EXPECT_NEAR(product(r), 1.0, 0.05);
  }
}

TEST(Benchkit, ConcurrentClientsMultiplyTheWork) {
  const auto images = tiny_images(64);
  const auto r = bench_runner("stub", images, {.batch_size = 16, .warmup = 1, .reps = 1, .clients = 4},
                              [](const Tensor&) { std::this_thread::sleep_for(std::chrono::milliseconds(5)); });
  EXPECT_EQ(r.timed_batches, 16u);
  EXPECT_EQ(r.clients, 4u);
  EXPECT_GT(r.images_per_second, 0.0);
}

TEST(Benchkit, FailuresYieldPartialReports) {
  const auto images = tiny_images(100);
  int calls = 0;
  const auto r = bench_runner("stub", images, {.batch_size = 10, .warmup = 1, .reps = 1}, [&](const Tensor&) {
    if (++calls == 5) throw Error(ErrorCode::kInvalidArgument, "boom");
  });
  EXPECT_TRUE(r.partial);
  EXPECT_EQ(r.timed_batches, 3u);
  EXPECT_NE(r.error.find("boom"), std::string::npos);
}

TEST(Benchkit, ModelBenchUsesBundleSizes) {
  const auto b = micro_mobilenet({.head_width = 1});
  testgen::Gen g(4);
  std::vector<Tensor> images;
  for (int i = 0; i < 5; ++i) images.push_back(g.tensor({1, 32, 32, 3}));
  const auto r = bench(b, images, {.batch_size = 2, .warmup = 1, .reps = 1});
  EXPECT_EQ(r.variant, "fp32");
  EXPECT_EQ(r.payload_bytes, size_of(b).payload_bytes);
  EXPECT_EQ(r.batch_count, 3u);
  EXPECT_NEAR(product(r), 1.0, 0.05);
}

TEST(Benchkit, ComparisonIsRelativeToTheOriginal) {
  BenchReport a{.variant = "fp32", .container_bytes = 1000, .payload_bytes = 800, .ms_per_image = 2.0,
                .images_per_second = 500};
  BenchReport b{.variant = "int8", .container_bytes = 300, .payload_bytes = 200, .ms_per_image = 1.0,
                .images_per_second = 1000};
  const std::vector<BenchReport> reports{b, a};
  const auto rows = compare_variants(reports);
  ASSERT_EQ(rows.size(), 2u);
  const auto& int8 = rows[0].variant == "int8" ? rows[0] : rows[1];
  EXPECT_DOUBLE_EQ(int8.container_ratio, 0.3);
  EXPECT_DOUBLE_EQ(int8.payload_ratio, 0.25);
  EXPECT_DOUBLE_EQ(int8.latency_ratio, 0.5);
  EXPECT_DOUBLE_EQ(int8.throughput_ratio, 2.0);
  EXPECT_ERROR_CODE(compare_variants(std::vector<BenchReport>{b, b}), ErrorCode::kMissingOriginal);
  const auto j = nlohmann::json::parse(bench_json(reports));
  EXPECT_EQ(j["reports"].size(), 2u);
}

TEST(Benchkit, OptionsAreValidated) {
  const auto images = tiny_images(4);
  const auto noop = [](const Tensor&) {};
  EXPECT_ERROR_CODE(bench_runner("s", images, {.warmup = 0}, noop), ErrorCode::kInvalidArgument);
  EXPECT_ERROR_CODE(bench_runner("s", images, {.reps = 0}, noop), ErrorCode::kInvalidArgument);
  EXPECT_ERROR_CODE(bench_runner("s", {}, {}, noop), ErrorCode::kInvalidArgument);
}

TEST(Benchkit, Iso8601ParsesZonesAndFractions) {
  EXPECT_EQ(parse_iso8601("1970-01-01T00:00:00Z"), 0);
  EXPECT_EQ(parse_iso8601("1970-01-01 00:00:01.5"), 1'500'000);
  EXPECT_EQ(parse_iso8601("1970-01-01T01:00:00+01:00"), 0);
  EXPECT_EQ(parse_iso8601("2000-03-01T00:00:00Z"), 951868800LL * 1'000'000);
  EXPECT_FALSE(parse_iso8601("2000-02-30T00:00:00Z"));
  EXPECT_FALSE(parse_iso8601("yesterday"));
  testgen::Gen g(5);
  for (int i = 0; i < 1000; ++i) {
    const Timestamp t = g.range(0, 4'000'000'000LL) * 1'000'000 + g.range(0, 999'999);
    EXPECT_EQ(parse_iso8601(format_iso8601(t)), t);
  }
}

TEST(Benchkit, PowerRatiosFromTheReferenceLog) {
  const auto f = testgen::reference_power_fixture();
  const auto samples = parse_power_log(f.log);
  const auto r = power_report(samples, f.idle, f.windows, "fp32");
  EXPECT_NEAR(r.idle.watts, 5.2, 1e-9);
  ASSERT_EQ(r.variants.size(), 4u);
  EXPECT_EQ(r.variants[0].label, "fp32");
  EXPECT_NEAR(r.variants[0].watts, 6.0, 1e-9);
  EXPECT_EQ(r.variants[0].samples, 60u);
  char buf[3][8];
  for (int i = 0; i < 3; ++i) std::snprintf(buf[i], 8, "%.2f", r.variants[static_cast<std::size_t>(i + 1)].ratio);
  EXPECT_STREQ(buf[0], "0.92");
  EXPECT_STREQ(buf[1], "0.92");
  EXPECT_STREQ(buf[2], "0.90");
  const auto text = power_text(r);
  EXPECT_NE(text.find("0.92"), std::string::npos);
  EXPECT_NE(text.find("0.90"), std::string::npos);
}

TEST(Benchkit, PowerReportIgnoresWindowOrderAndLogOrder) {
  const auto f = testgen::reference_power_fixture();
  auto samples = parse_power_log(f.log);
  const auto base = power_report(samples, f.idle, f.windows, "fp32");
  testgen::Gen g(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto windows = f.windows;
    std::shuffle(windows.begin(), windows.end(), g.engine());
    std::shuffle(samples.begin(), samples.end(), g.engine());
    const auto r = power_report(samples, f.idle, windows, "fp32");
    EXPECT_EQ(r.variants[0].label, "fp32");
    for (const auto& v : r.variants) {
      const auto it = std::find_if(base.variants.begin(), base.variants.end(),
                                   [&](const WindowMean& w) { return w.label == v.label; });
      ASSERT_NE(it, base.variants.end());
      EXPECT_NEAR(v.ratio, it->ratio, 1e-12);
    }
  }
}

TEST(Benchkit, PowerErrors) {
  EXPECT_ERROR_CODE(parse_power_log("2024-01-01T00:00:00Z,5.0\nbad line\n"), ErrorCode::kParseError);
  try {
    parse_power_log("# header\n2024-01-01T00:00:00Z,5.0\n\nnot-a-time,3\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.subject(), "4");
  }
  const auto f = testgen::reference_power_fixture();
  const auto samples = parse_power_log(f.log);
  EXPECT_ERROR_CODE(power_report(samples, f.idle, f.windows, "fp64"), ErrorCode::kMissingOriginal);
  auto overlapping = f.windows;
  overlapping[1].start = overlapping[0].start + 1;
  EXPECT_THROW(power_report(samples, f.idle, overlapping, "fp32"), Error);
  auto empty = f.windows;
  empty[2] = {"fp16", f.windows.back().end + 1'000'000'000, f.windows.back().end + 1'000'000'001};
  EXPECT_ERROR_CODE(power_report(samples, f.idle, empty, "fp32"), ErrorCode::kEmptyWindow);
  EXPECT_THROW(parse_window("x", "2024-01-01T00:00:10Z/2024-01-01T00:00:00Z"), Error);
  EXPECT_THROW(parse_window("x", "2024-01-01T00:00:10Z"), Error);
}
