#include "edgeinfer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include "edgeinfer/engine.hpp"
#include "edgeinfer/error.hpp"
#include "edgeinfer/random.hpp"

namespace edgeinfer {

namespace fs = std::filesystem;

std::string_view to_string(LossKind loss) {
  return loss == LossKind::kBinaryCrossEntropy ? "binary-cross-entropy" : "categorical-cross-entropy";
}

LossKind parse_loss_kind(std::string_view text) {
  if (text == "binary-cross-entropy" || text == "bce") return LossKind::kBinaryCrossEntropy;
  if (text == "categorical-cross-entropy" || text == "cce") return LossKind::kCategoricalCrossEntropy;
  throw Error(ErrorCode::kInvalidArgument, "unknown loss '" + std::string(text) + "'");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s, double lr, const AdamParams& a) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient has " + std::to_string(grads.size()) + " entries for " +
                                               std::to_string(params.size()) + " parameters");
  }
  if (s.m.empty() && s.v.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  if (s.m.size() != params.size() || s.v.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "optimizer state does not match the parameter count");
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = a.beta1 * s.m[i] + (1.0 - a.beta1) * grads[i];
    s.v[i] = a.beta2 * s.v[i] + (1.0 - a.beta2) * grads[i] * grads[i];
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + a.epsilon);
  }
}

LossGrad bce_loss(double p, int y) {
  const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return {-(y * std::log(pc) + (1 - y) * std::log(1.0 - pc)), p - y};
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> indices) const {
  FeatureMatrix out{indices.size(), cols, {}};
  out.data.reserve(indices.size() * cols);
  for (auto i : indices) {
    const auto r = row(i);
    out.data.insert(out.data.end(), r.begin(), r.end());
  }
  return out;
}

std::vector<double> Head::logits(std::span<const float> x) const {
  std::vector<double> z(b);
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < out; ++j) z[j] += xi * w[i * out + j];
  }
  return z;
}

namespace {

void softmax_in_place(std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) total += (v = std::exp(v - top));
  for (auto& v : z) v /= total;
}

}  // namespace

double head_loss(const Head& h, const FeatureMatrix& x, std::span<const int> targets, LossKind loss,
                 std::span<const std::size_t> rows, std::vector<double>* grad) {
  if (x.cols != h.in) throw Error(ErrorCode::kWidthMismatch, "feature width does not match the head");
  if (rows.empty()) return 0.0;
  if (grad != nullptr) grad->assign(h.parameter_count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  std::vector<double> dz(h.out);
  for (auto r : rows) {
    const auto xr = x.row(r);
    auto z = h.logits(xr);
    const int y = targets[r];
    if (loss == LossKind::kBinaryCrossEntropy) {
      const auto lg = bce_loss(sigmoid(z[0]), y);
      total += lg.loss;
      dz[0] = lg.grad;
    } else {
      const double top = *std::max_element(z.begin(), z.end());
      double lse = 0.0;
      for (double v : z) lse += std::exp(v - top);
      total += top + std::log(lse) - z[static_cast<std::size_t>(y)];
      softmax_in_place(z);
      for (std::size_t j = 0; j < h.out; ++j) dz[j] = z[j] - (static_cast<int>(j) == y ? 1.0 : 0.0);
    }
    if (grad != nullptr) {
      auto& g = *grad;
      for (std::size_t i = 0; i < h.in; ++i) {
        for (std::size_t j = 0; j < h.out; ++j) g[i * h.out + j] += xr[i] * dz[j] * inv_n;
      }
      for (std::size_t j = 0; j < h.out; ++j) g[h.w.size() + j] += dz[j] * inv_n;
    }
  }
  return total * inv_n;
}

int head_predict(const Head& h, std::span<const float> x, int positive_class) {
  const auto z = h.logits(x);
  if (h.out == 1) return z[0] >= 0.0 ? positive_class : (positive_class == 0 ? 1 : 0);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

namespace {

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  static Standardizer fit(const FeatureMatrix& x) {
    Standardizer s{std::vector<double>(x.cols, 0.0), std::vector<double>(x.cols, 0.0)};
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t c = 0; c < x.cols; ++c) s.mean[c] += x.data[r * x.cols + c];
    }
    for (auto& m : s.mean) m /= static_cast<double>(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t c = 0; c < x.cols; ++c) {
        const double d = x.data[r * x.cols + c] - s.mean[c];
        s.sd[c] += d * d;
      }
    }
    for (auto& v : s.sd) {
      v = std::sqrt(v / static_cast<double>(x.rows));
      if (v < 1e-6) v = 1.0;
    }
    return s;
  }

  FeatureMatrix apply(const FeatureMatrix& x) const {
    FeatureMatrix out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const std::size_t c = i % x.cols;
      out.data[i] = static_cast<float>((out.data[i] - mean[c]) / sd[c]);
    }
    return out;
  }

  Head fold(const Head& h) const {
    Head out = h;
    for (std::size_t i = 0; i < h.in; ++i) {
      for (std::size_t j = 0; j < h.out; ++j) {
        out.w[i * h.out + j] = h.w[i * h.out + j] / sd[i];
        out.b[j] -= mean[i] * h.w[i * h.out + j] / sd[i];
      }
    }
    return out;
  }
};

std::pair<double, double> evaluate(const Head& h, const FeatureMatrix& x, std::span<const int> targets,
                                   std::span<const int> labels, LossKind loss, int positive_class) {
  std::vector<std::size_t> all(x.rows);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const double l = head_loss(h, x, targets, loss, all);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < x.rows; ++r) correct += head_predict(h, x.row(r), positive_class) == labels[r] ? 1 : 0;
  return {l, static_cast<double>(correct) / static_cast<double>(x.rows)};
}

void check_labels(const FeatureMatrix& x, std::span<const int> labels, int class_count, const char* what) {
  if (labels.size() != x.rows) {
    throw Error(ErrorCode::kLengthMismatch, std::string(what) + ": " + std::to_string(x.rows) + " feature rows but " +
                                                std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw Error(ErrorCode::kLabelOutOfRange, std::string(what) + ": label out of range");
  }
}

}  // namespace

TrainResult train_head(const FeatureMatrix& train, std::span<const int> train_labels, const FeatureMatrix* val,
                       std::span<const int> val_labels, int class_count, int positive_class, const TrainConfig& cfg) {
  if (class_count < 2) throw Error(ErrorCode::kDegenerateData, "a classifier needs at least two classes");
  check_labels(train, train_labels, class_count, "training set");
  if (val != nullptr) check_labels(*val, val_labels, class_count, "validation set");
  if (train.rows == 0) throw Error(ErrorCode::kEmptyDataset, "no training rows");
  if (std::all_of(train_labels.begin(), train_labels.end(), [&](int y) { return y == train_labels[0]; })) {
    throw Error(ErrorCode::kDegenerateData, "training labels contain a single class");
  }
  const bool binary = cfg.loss == LossKind::kBinaryCrossEntropy;
  if (binary && class_count != 2) {
    throw Error(ErrorCode::kInvalidArgument, "binary cross-entropy needs exactly two classes; use categorical");
  }
  if (cfg.batch_size == 0 || cfg.epochs < 1) throw Error(ErrorCode::kInvalidArgument, "batch size and epochs must be positive");

  auto targets_of = [&](std::span<const int> labels) {
    std::vector<int> t(labels.begin(), labels.end());
    if (binary) {
      for (auto& y : t) y = y == positive_class ? 1 : 0;
    }
    return t;
  };
  const auto train_t = targets_of(train_labels);
  const auto val_t = val != nullptr ? targets_of(val_labels) : std::vector<int>{};

  const auto std_ = Standardizer::fit(train);
  const FeatureMatrix xs = std_.apply(train);
  const FeatureMatrix vs = val != nullptr ? std_.apply(*val) : FeatureMatrix{};

  Head h;
  h.in = train.cols;
  h.out = binary ? 1 : static_cast<std::size_t>(class_count);
  h.w.resize(h.in * h.out);
  h.b.assign(h.out, 0.0);
  std::mt19937_64 init_rng(rnd::derive(cfg.seed, {0xbeef}));
  for (auto& w : h.w) w = 0.01 * rnd::normal(init_rng);

  std::vector<double> theta(h.parameter_count());
  AdamState state;
  std::vector<double> grad;
  std::vector<std::size_t> order(train.rows);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  Head best = h;
  double best_acc = -1.0, best_loss = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(rnd::derive(cfg.seed, {static_cast<std::uint64_t>(epoch)}));
    rnd::shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      head_loss(h, xs, train_t, cfg.loss, std::span(order).subspan(start, end - start), &grad);
      std::copy(h.w.begin(), h.w.end(), theta.begin());
      std::copy(h.b.begin(), h.b.end(), theta.begin() + static_cast<std::ptrdiff_t>(h.w.size()));
      adam_step(theta, grad, state, cfg.learning_rate, cfg.adam);
      std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(h.w.size()), h.w.begin());
      std::copy(theta.begin() + static_cast<std::ptrdiff_t>(h.w.size()), theta.end(), h.b.begin());
    }
    EpochLog e;
    e.epoch = epoch;
    std::tie(e.train_loss, e.train_accuracy) = evaluate(h, xs, train_t, train_labels, cfg.loss, positive_class);
    bool better = false;
    if (val != nullptr && val->rows > 0) {
      const auto [vl, va] = evaluate(h, vs, val_t, val_labels, cfg.loss, positive_class);
      e.val_loss = vl;
      e.val_accuracy = va;
      better = va > best_acc || (va == best_acc && vl < best_loss);
      if (better) {
        best_acc = va;
        best_loss = vl;
      }
    } else {
      better = true;
    }
    if (better) {
      best = h;
      result.best_epoch = epoch;
    }
    result.log.push_back(e);
  }
  result.head = std_.fold(best);
  return result;
}

std::string training_log_table(const std::vector<EpochLog>& log) {
  std::string out = "epoch\tsplit\tloss\taccuracy\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d\ttrain\t%.6f\t%.6f\n", e.epoch, e.train_loss, e.train_accuracy);
    out += buf;
    if (e.val_loss) {
      std::snprintf(buf, sizeof buf, "%d\tval\t%.6f\t%.6f\n", e.epoch, *e.val_loss, *e.val_accuracy);
      out += buf;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature extraction

FeatureExtractor::FeatureExtractor(const ModelBundle& b, ExtractOptions options)
    : bundle_(b), options_(std::move(options)) {
  if (!b.meta.feature_node || b.graph.find(*b.meta.feature_node) == nullptr) {
    throw Error(ErrorCode::kMissingFeatureNode, "bundle '" + b.meta.name + "' has no designated feature node", b.meta.name);
  }
  feature_node_ = *b.meta.feature_node;
  const auto shapes = infer_shapes(b.graph, b.weights);
  const auto& s = shapes.at(feature_node_);
  width_ = static_cast<std::size_t>(element_count(s) / static_cast<std::size_t>(s.at(0)));
}

std::vector<float> FeatureExtractor::features_of(const Image& img) const {
  const Tensor x = preprocess(img, bundle_.meta.preprocess);
  ForwardOptions opts;
  opts.targets = {feature_node_};
  const auto values = run_forward(bundle_, x, opts);
  ++forwards_;
  return values.at(feature_node_).to_f32_values();
}

namespace {

std::string item_key(const DatasetManifest& m, std::size_t index) {
  std::string key;
  auto add_file = [&](const fs::path& p) {
    std::error_code ec;
    const auto abs = fs::absolute(p, ec).lexically_normal();
    key += abs.generic_string() + "\n";
    const auto size = fs::file_size(p, ec);
    key += ec ? std::string("?") : std::to_string(size);
    const auto mtime = fs::last_write_time(p, ec);
    key += "\n" + (ec ? std::string("?") : std::to_string(mtime.time_since_epoch().count())) + "\n";
  };
  const auto& it = m.items.at(index);
  key += std::string(to_string(it.origin)) + "\n" + std::to_string(it.seed) + "\n";
  add_file(m.resolve(it));
  if (it.parent) add_file(m.resolve(m.items.at(*it.parent)));
  const auto d = sha256(std::span(reinterpret_cast<const std::uint8_t*>(key.data()), key.size()));
  return to_hex(d);
}

bool read_cached(const fs::path& p, std::size_t width, std::vector<float>& out) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  out.resize(width);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(width * sizeof(float)));
  return static_cast<std::size_t>(in.gcount()) == width * sizeof(float) && in.peek() == std::char_traits<char>::eof();
}

void write_cached(const fs::path& p, const std::vector<float>& v) {
  const fs::path tmp = p.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return;  // the cache is an optimisation only
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
}

}  // namespace

FeatureMatrix FeatureExtractor::extract(const DatasetManifest& m, std::span<const std::size_t> indices) {
  FeatureMatrix out{indices.size(), width_, std::vector<float>(indices.size() * width_)};
  fs::path cache;
  if (options_.cache_dir) {
    cache = *options_.cache_dir / to_hex(bundle_.checksum);
    fs::create_directories(cache);
  }
  unsigned workers = options_.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options_.threads;
  workers = static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(workers, indices.size())));

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<float> f;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t item = indices[k];
      fs::path entry;
      if (!cache.empty()) {
        entry = cache / (item_key(m, item) + ".f32");
        if (read_cached(entry, width_, f)) {
          std::copy(f.begin(), f.end(), out.data.begin() + static_cast<std::ptrdiff_t>(k * width_));
          continue;
        }
      }
      f = features_of(load_item(m, item));
      if (f.size() != width_) throw Error(ErrorCode::kShapeMismatch, "feature width changed between items");
      if (!entry.empty()) write_cached(entry, f);
      std::copy(f.begin(), f.end(), out.data.begin() + static_cast<std::ptrdiff_t>(k * width_));
    }
  };

  if (workers <= 1) {
    work(0, indices.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = indices.size() * w / workers, end = indices.size() * (w + 1) / workers;
    pool.emplace_back([&, begin, end, w] {
      try {
        work(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

FeatureMatrix FeatureExtractor::extract(const DatasetManifest& m) {
  std::vector<std::size_t> all(m.items.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return extract(m, all);
}

// ---------------------------------------------------------------------------
// Head attachment

ModelBundle attach_head(const ModelBundle& b, const Head& head) {
  if (!b.meta.feature_node || b.graph.find(*b.meta.feature_node) == nullptr) {
    throw Error(ErrorCode::kMissingFeatureNode, "bundle '" + b.meta.name + "' has no designated feature node", b.meta.name);
  }
  const std::string feature = *b.meta.feature_node;
  if (!b.graph.consumers(feature).empty()) {
    throw Error(ErrorCode::kFeatureNodeConsumed, "feature node '" + feature + "' already feeds another node", feature);
  }
  const auto shapes = infer_shapes(b.graph, b.weights);
  const auto width = static_cast<std::size_t>(shapes.at(feature).back());
  if (head.in != width) {
    throw Error(ErrorCode::kWidthMismatch, "head expects " + std::to_string(head.in) + " features, feature node '" +
                                               feature + "' yields " + std::to_string(width), feature);
  }
  const std::size_t classes = b.meta.classes.size();
  if ((head.out == 1 && classes != 2) || (head.out != 1 && head.out != classes)) {
    throw Error(ErrorCode::kWidthMismatch, "head width " + std::to_string(head.out) + " does not fit " +
                                               std::to_string(classes) + " classes");
  }
  if (head.w.size() != head.in * head.out || head.b.size() != head.out) {
    throw Error(ErrorCode::kShapeMismatch, "head parameters do not match its dimensions");
  }

  Graph g = b.graph;
  std::vector<Tensor> weights = b.weights;
  std::vector<float> w(head.w.begin(), head.w.end()), bias(head.b.begin(), head.b.end());
  const auto n = static_cast<std::int64_t>(head.out);
  const std::string w_id = g.fresh_id("head/w");
  g.nodes.push_back({w_id, OpKind::kConst, {}, {}, add_weight(weights, Tensor::from_f32({static_cast<std::int64_t>(head.in), n}, w))});
  const std::string mm_id = g.fresh_id("head/matmul");
  g.nodes.push_back({mm_id, OpKind::kMatMul, {feature, w_id}, {}, std::nullopt});
  const std::string b_id = g.fresh_id("head/b");
  g.nodes.push_back({b_id, OpKind::kConst, {}, {}, add_weight(weights, Tensor::from_f32({n}, bias))});
  const std::string out_id = g.fresh_id("head/logits");
  g.nodes.push_back({out_id, OpKind::kAddV2, {mm_id, b_id}, {}, std::nullopt});
  g.outputs = {out_id};

  BundleMetadata meta = b.meta;
  meta.variant = "fp32";
  return make_bundle(std::move(meta), std::move(g), std::move(weights));
}

}  // namespace edgeinfer
