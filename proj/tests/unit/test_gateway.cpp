#include <gtest/gtest.h>

#include <fstream>
#include <future>
#include <httplib.h>
#include <json.hpp>

#include "edgeinfer/datakit.hpp"
#include "edgeinfer/engine.hpp"
#include "edgeinfer/fixtures.hpp"
#include "edgeinfer/gateway.hpp"
#include "edgeinfer/quantizer.hpp"
#include "support/gen.hpp"
#include "support/helpers.hpp"

using namespace edgeinfer;
using nlohmann::json;

namespace {

VariantRegistry four_variants() {
  auto b = micro_mobilenet({.seed = 3, .head_width = 1});
  b.meta.preprocess = {.height = 32, .width = 32, .value_range = ValueRange::kMinusOneOne};
  std::vector<Tensor> calib;
  for (int i = 0; i < 8; ++i) calib.push_back(preprocess(synth_image(i % 2, 100 + i, 32), b.meta.preprocess));
  auto vs = make_variants(b, calib, {.threads = 1});
  VariantRegistry r;
  r.add(vs.int8);
  r.add(b);
  r.add(vs.fp16);
  r.add(vs.fp32opt);
  return r;
}

std::string png_of(int cls, std::uint64_t seed) {
  const auto bytes = encode_png(synth_image(cls, seed, 48));
  return {bytes.begin(), bytes.end()};
}

httplib::Result post_predict(httplib::Client& c, const std::string& image, const std::string& model,
                             const std::string& extra = {}) {
  httplib::MultipartFormDataItems items;
  if (!image.empty()) items.push_back({"image", image, "x.png", "image/png"});
  if (!model.empty()) items.push_back({"model", model, "", ""});
  const std::string path = extra.empty() ? "/api/predict" : "/api/predict?" + extra;
  return c.Post(path, items);
}

class GatewayTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    audit_ = new testgen::TempDir("audit");
    GatewaySettings s;
    s.host = "127.0.0.1";
    s.port = 0;
    s.max_concurrent = 2;
    s.audit_log = *audit_ / "audit.jsonl";
    gateway_ = new Gateway(four_variants(), s);
    gateway_->start();
  }
  static void TearDownTestSuite() {
    gateway_->stop();
    delete gateway_;
    delete audit_;
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", gateway_->port());
    c.set_read_timeout(60, 0);
    return c;
  }

  static Gateway* gateway_;
  static testgen::TempDir* audit_;
};

Gateway* GatewayTest::gateway_ = nullptr;
testgen::TempDir* GatewayTest::audit_ = nullptr;

}  // namespace

TEST_F(GatewayTest, HealthAndModels) {
  auto c = client();
  auto h = c.Get("/api/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  const auto hj = json::parse(h->body);
  EXPECT_EQ(hj["status"], "ok");
  EXPECT_EQ(hj["variants"], 4);

  auto m = c.Get("/api/models");
  ASSERT_TRUE(m);
  const auto mj = json::parse(m->body);
  ASSERT_EQ(mj["models"].size(), 4u);
  const std::vector<std::string> order{"fp32", "fp32opt", "fp16", "int8"};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(mj["models"][i]["id"], order[i]);
  EXPECT_EQ(mj["models"][2]["precision"], "fp16");
  EXPECT_EQ(mj["models"][0]["classes"][0], "Monkeypox");
  EXPECT_LT(mj["models"][3]["payload_bytes"].get<std::size_t>(), mj["models"][0]["payload_bytes"].get<std::size_t>());
}

TEST_F(GatewayTest, EightConcurrentRequestsMatchDirectPredictions) {
  const auto& reg = gateway_->registry();
  std::vector<std::future<std::pair<int, json>>> futures;
  std::vector<std::string> expected;
  for (int i = 0; i < 8; ++i) {
    const auto& v = reg.entries()[static_cast<std::size_t>(i % 4)];
    const auto image = png_of(i % 2, 500 + static_cast<std::uint64_t>(i));
    const std::vector<std::uint8_t> raw(image.begin(), image.end());
    expected.push_back(predict(v.bundle, raw).label);
    futures.push_back(std::async(std::launch::async, [this, image, id = v.id] {
      auto c = client();
      auto r = post_predict(c, image, id);
      if (!r) return std::make_pair(-1, json());
      return std::make_pair(r->status, json::parse(r->body));
    }));
  }
  for (int i = 0; i < 8; ++i) {
    const auto [status, body] = futures[static_cast<std::size_t>(i)].get();
    ASSERT_EQ(status, 200) << body.dump();
    EXPECT_EQ(body["label"], expected[static_cast<std::size_t>(i)]);
    EXPECT_EQ(body["model"], reg.entries()[static_cast<std::size_t>(i % 4)].id);
    EXPECT_TRUE(body["image_echo"].is_null());
  }
}

TEST_F(GatewayTest, RepeatedRequestsAreDeterministic) {
  auto c = client();
  const auto image = png_of(0, 9);
  double first = -1;
  for (int i = 0; i < 3; ++i) {
    auto r = post_predict(c, image, "int8");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    const double conf = json::parse(r->body)["confidence"];
    if (first < 0) first = conf;
    EXPECT_EQ(conf, first);
  }
}

TEST_F(GatewayTest, EchoReturnsADataUrl) {
  auto c = client();
  auto r = post_predict(c, png_of(1, 4), "fp16", "echo=1");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["image_echo"].get<std::string>().rfind("data:image/png;base64,", 0), 0u);
}

TEST_F(GatewayTest, ErrorsUseStableCodes) {
  auto c = client();
  auto check = [](const httplib::Result& r, int status, const std::string& code) {
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, status);
    const auto j = json::parse(r->body);
    EXPECT_EQ(j["error"]["code"], code);
    EXPECT_FALSE(j["error"]["message"].get<std::string>().empty());
  };
  check(post_predict(c, png_of(0, 1), "bf16"), 404, "unknown-model");
  check(post_predict(c, "definitely not an image", "fp32"), 400, "undecodable-image");
  check(post_predict(c, "", "fp32"), 422, "missing-field");
  check(post_predict(c, png_of(0, 1), ""), 422, "missing-field");
  check(c.Post("/api/predict", "{}", "application/json"), 422, "missing-field");
  check(post_predict(c, std::string(kMaxUploadBytes + 1, 'x'), "fp32"), 413, "payload-too-large");
  check(post_predict(c, std::string(kMaxUploadBytes + 512 * 1024, 'x'), "fp32"), 413, "payload-too-large");
  check(c.Get("/api/nothing"), 404, "not-found");
}

TEST_F(GatewayTest, AuditLogHoldsHashesOnly) {
  auto c = client();
  const auto image = png_of(1, 77);
  ASSERT_EQ(post_predict(c, image, "fp32")->status, 200);
  std::ifstream in(*audit_ / "audit.jsonl");
  std::string line, last;
  while (std::getline(in, line)) last = line;
  const auto j = json::parse(last);
  const auto digest = sha256({reinterpret_cast<const std::uint8_t*>(image.data()), image.size()});
  EXPECT_EQ(j["sha256"], to_hex(digest));
  EXPECT_EQ(j["bytes"], image.size());
  EXPECT_EQ(last.find("base64"), std::string::npos);
}

TEST_F(GatewayTest, RootServesAPageWithoutStaticAssets) {
  auto c = client();
  auto r = c.Get("/");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_NE(r->get_header_value("Content-Type").find("text/html"), std::string::npos);
}

TEST(GatewaySettings, FlagsBeatEnvironmentBeatDefaults) {
  const std::map<std::string, std::string> env{
      {"EDGEINFER_PORT", "9000"}, {"EDGEINFER_HOST", "10.0.0.1"}, {"EDGEINFER_MAX_CONCURRENT", "3"}};
  const EnvLookup lookup = [&](const char* name) -> std::optional<std::string> {
    const auto it = env.find(name);
    if (it == env.end()) return std::nullopt;
    return it->second;
  };
  const auto none = resolve_settings({}, [](const char*) { return std::optional<std::string>(); });
  EXPECT_EQ(none.port, 8080);
  EXPECT_EQ(none.host, "0.0.0.0");
  EXPECT_EQ(none.models_dir, "models");
  const auto from_env = resolve_settings({}, lookup);
  EXPECT_EQ(from_env.port, 9000);
  EXPECT_EQ(from_env.host, "10.0.0.1");
  EXPECT_EQ(from_env.max_concurrent, 3u);
  GatewayOverrides flags;
  flags.port = 7000;
  const auto mixed = resolve_settings(flags, lookup);
  EXPECT_EQ(mixed.port, 7000);
  EXPECT_EQ(mixed.host, "10.0.0.1");
  const EnvLookup bad = [](const char* name) -> std::optional<std::string> {
    if (std::string(name) == "EDGEINFER_PORT") return "eighty";
    return std::nullopt;
  };
  EXPECT_THROW(resolve_settings({}, bad), Error);
}

TEST(GatewayRegistry, LoadsBundlesFromDisk) {
  testgen::TempDir dir("models");
  EXPECT_ERROR_CODE(VariantRegistry::load(dir / "missing"), ErrorCode::kIo);
  EXPECT_ERROR_CODE(VariantRegistry::load(dir.path()), ErrorCode::kIo);
  auto b = micro_mobilenet({.seed = 1, .head_width = 1});
  save_bundle(b, dir / "m");
  auto opt = fuse_constants(b);
  save_bundle(opt, dir / "m-fp32opt");
  const auto r = VariantRegistry::load(dir.path());
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.entries()[0].id, "fp32");
  EXPECT_EQ(r.entries()[1].id, "fp32opt");
  EXPECT_EQ(r.find("fp32")->size.payload_bytes, size_of(b).payload_bytes);
  VariantRegistry dup;
  dup.add(b);
  EXPECT_THROW(dup.add(b), Error);
  EXPECT_THROW(dup.add(micro_mobilenet({.seed = 9, .head_width = 1})), Error);
}
