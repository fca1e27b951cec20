#include "edgeinfer/fixtures.hpp"

#include <cmath>
#include <random>

#include "edgeinfer/builder.hpp"
#include "edgeinfer/random.hpp"

namespace edgeinfer {

namespace {

class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}

  Tensor he_normal(Shape shape, std::int64_t fan_in) {
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<float> v(element_count(shape));
    for (auto& x : v) x = static_cast<float>(sd * rnd::normal(rng_));
    return Tensor::from_f32(std::move(shape), std::move(v));
  }

  Tensor uniform(std::int64_t n, float lo, float hi) {
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = static_cast<float>(rnd::uniform(rng_, lo, hi));
    return Tensor::from_f32({n}, std::move(v));
  }

 private:
  std::mt19937_64 rng_;
};

struct Net {
  GraphBuilder g;
  Init init;

  std::string batch_norm(const std::string& scope, const std::string& x, std::int64_t c) {
    const auto m = g.mul_const(scope + "/bn_mul", x, init.uniform(c, 0.8f, 1.2f));
    return g.add_const(scope + "/bn_add", m, init.uniform(c, -0.1f, 0.1f));
  }

  std::string pointwise(const std::string& scope, const std::string& x, std::int64_t cin, std::int64_t cout,
                        bool act) {
    auto y = g.conv2d(scope + "/conv", x, init.he_normal({1, 1, cin, cout}, cin));
    y = batch_norm(scope, y, cout);
    return act ? g.relu6(scope + "/relu6", y) : y;
  }

  std::string depthwise(const std::string& scope, const std::string& x, std::int64_t c, int stride) {
    std::string in = x;
    Padding padding = Padding::kSame;
    if (stride == 2) {
      in = g.pad(scope + "/pad", x, {{0, 0}, {0, 1}, {0, 1}, {0, 0}});
      padding = Padding::kValid;
    }
    auto y = g.depthwise(scope + "/dw", in, init.he_normal({3, 3, c, 1}, 9), {stride, stride}, padding);
    y = batch_norm(scope + "/dw", y, c);
    return g.relu6(scope + "/dw/relu6", y);
  }
};

}  // namespace

ModelBundle micro_mobilenet(const MicroMobileNetOptions& o) {
  Net n{GraphBuilder{}, Init{o.seed}};
  auto& g = n.g;
  auto x = g.input("input", {1, o.input_size, o.input_size, 3});

  x = g.pad("stem/pad", x, {{0, 0}, {0, 1}, {0, 1}, {0, 0}});
  x = g.conv2d("stem/conv", x, n.init.he_normal({3, 3, 3, 32}, 27), {2, 2}, Padding::kValid);
  x = n.batch_norm("stem", x, 32);
  x = g.relu6("stem/relu6", x);

  // Block 1: no expansion, residual.
  auto y = n.depthwise("block1", x, 32, 1);
  y = n.pointwise("block1/project", y, 32, 32, false);
  x = g.op(OpKind::kAddV2, "block1/add", {x, y});

  // Block 2: 6x expansion, stride 2.
  x = n.pointwise("block2/expand", x, 32, 192, true);
  x = n.depthwise("block2", x, 192, 2);
  x = n.pointwise("block2/project", x, 192, 64, false);

  // Block 3: no expansion, residual.
  y = n.depthwise("block3", x, 64, 1);
  y = n.pointwise("block3/project", y, 64, 64, false);
  x = g.op(OpKind::kAddV2, "block3/add", {x, y});

  x = g.mean("pool", x, {1, 2});
  if (o.head_width > 0) {
    x = g.matmul("head/matmul", x, n.init.he_normal({kMicroMobileNetFeatures, o.head_width}, kMicroMobileNetFeatures));
    x = g.add_const("head/bias", x, Tensor::from_f32({o.head_width}, std::vector<float>(o.head_width, 0.0f)));
  }
  g.output(x);

  BundleMetadata meta;
  meta.name = o.name;
  meta.classes = o.classes;
  meta.preprocess = {o.input_size, o.input_size, ValueRange::kMinusOneOne};
  meta.created = creation_timestamp();
  meta.feature_node = "pool";
  return std::move(g).build(std::move(meta));
}

ModelBundle minimal_bundle(const Shape& input_shape) {
  GraphBuilder g;
  const auto x = g.input("input", input_shape);
  g.output(g.op(OpKind::kIdentity, "identity", {x}));
  BundleMetadata meta;
  meta.name = "minimal";
  meta.classes = {"a", "b"};
  meta.created = creation_timestamp();
  return std::move(g).build(std::move(meta));
}

}  // namespace edgeinfer
