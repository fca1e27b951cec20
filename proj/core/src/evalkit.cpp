#include "edgeinfer/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include <json.hpp>

#include "edgeinfer/engine.hpp"
#include "edgeinfer/error.hpp"

namespace edgeinfer {

using json = nlohmann::ordered_json;

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, int k,
                          std::vector<std::string> classes) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "class count must be positive");
  if (actual.size() != predicted.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(actual.size()) + " actual labels but " +
                                                std::to_string(predicted.size()) + " predictions");
  }
  if (classes.empty()) {
    for (int c = 0; c < k; ++c) classes.push_back(std::to_string(c));
  }
  if (classes.size() != static_cast<std::size_t>(k)) throw Error(ErrorCode::kInvalidArgument, "class names do not match k");
  ConfusionMatrix cm{std::move(classes), std::vector<std::vector<std::size_t>>(k, std::vector<std::size_t>(k, 0))};
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const int a = actual[i], p = predicted[i];
    if (a < 0 || a >= k || p < 0 || p >= k) {
      throw Error(ErrorCode::kLabelOutOfRange, "label pair (" + std::to_string(a) + ", " + std::to_string(p) +
                                                   ") at position " + std::to_string(i) + " is outside [0, " +
                                                   std::to_string(k) + ")");
    }
    ++cm.counts[a][p];
  }
  return cm;
}

BinaryCounts binary_counts(const ConfusionMatrix& cm, int c) {
  const auto k = cm.size();
  if (c < 0 || static_cast<std::size_t>(c) >= k) throw Error(ErrorCode::kLabelOutOfRange, "class index out of range");
  BinaryCounts b;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t p = 0; p < k; ++p) {
      const auto n = cm.counts[a][p];
      const bool pa = a == static_cast<std::size_t>(c), pp = p == static_cast<std::size_t>(c);
      if (pa && pp) b.tp += n;
      else if (!pa && pp) b.fp += n;
      else if (pa && !pp) b.fn += n;
      else b.tn += n;
    }
  }
  return b;
}

namespace {

Metric ratio(std::size_t num, std::size_t den, const char* why) {
  if (den == 0) return Metric::absent(why);
  return Metric::of(static_cast<double>(num) / static_cast<double>(den));
}

Metric f1_of(const Metric& p, const Metric& r) {
  if (!p.value || !r.value) return Metric::absent("precision-or-recall-undefined");
  if (*p.value + *r.value == 0.0) return Metric::absent("precision-and-recall-zero");
  return Metric::of(2.0 * *p.value * *r.value / (*p.value + *r.value));
}

ClassMetrics class_metrics(std::string name, const BinaryCounts& c) {
  ClassMetrics m{std::move(name), c, {}, {}, {}};
  m.precision = ratio(c.tp, c.tp + c.fp, "no-predicted-positives");
  m.recall = ratio(c.tp, c.tp + c.fn, "no-actual-positives");
  m.f1 = f1_of(m.precision, m.recall);
  return m;
}

Metric macro(const std::vector<ClassMetrics>& per_class, Metric ClassMetrics::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : per_class) {
    const auto& v = (c.*field).value;
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return Metric::absent("undefined-for-every-class");
  return Metric::of(sum / static_cast<double>(n));
}

}  // namespace

MetricsReport metrics_from_counts(const BinaryCounts& c) {
  const std::size_t total = c.tp + c.fp + c.fn + c.tn;
  if (total == 0) throw Error(ErrorCode::kEmptyMatrix, "confusion matrix is empty");
  MetricsReport r;
  r.accuracy = Metric::of(static_cast<double>(c.tp + c.tn) / static_cast<double>(total));
  const auto m = class_metrics("positive", c);
  r.precision = m.precision;
  r.recall = m.recall;
  r.f1 = m.f1;
  return r;
}

MetricsReport metrics(const ConfusionMatrix& cm, int positive_class) {
  const auto total = cm.total();
  if (total == 0) throw Error(ErrorCode::kEmptyMatrix, "confusion matrix is empty");
  if (positive_class < 0 || static_cast<std::size_t>(positive_class) >= cm.size()) {
    throw Error(ErrorCode::kLabelOutOfRange, "positive class out of range");
  }
  MetricsReport r;
  r.positive_class = positive_class;
  r.accuracy = Metric::of(static_cast<double>(cm.trace()) / static_cast<double>(total));
  for (std::size_t c = 0; c < cm.size(); ++c) {
    r.per_class.push_back(class_metrics(cm.classes[c], binary_counts(cm, static_cast<int>(c))));
  }
  if (cm.size() <= 2) {
    const auto& p = r.per_class[static_cast<std::size_t>(positive_class)];
    r.precision = p.precision;
    r.recall = p.recall;
    r.f1 = p.f1;
  } else {
    r.macro = true;
    r.precision = macro(r.per_class, &ClassMetrics::precision);
    r.recall = macro(r.per_class, &ClassMetrics::recall);
    r.f1 = macro(r.per_class, &ClassMetrics::f1);
  }
  return r;
}

Aggregate aggregate(std::span<const std::optional<double>> values) {
  Aggregate a;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++a.n;
    }
  }
  if (a.n == 0) return a;
  const double mean = sum / static_cast<double>(a.n);
  a.mean = mean;
  if (a.n >= 2) {
    double ss = 0.0;
    for (const auto& v : values) {
      if (v) ss += (*v - mean) * (*v - mean);
    }
    a.sd = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

CrossValidationReport cross_validate(const FeatureMatrix& features, std::span<const int> labels, const SplitPlan& plan,
                                     const TrainConfig& cfg, const std::vector<std::string>& classes,
                                     int positive_class, unsigned threads) {
  if (labels.size() != features.rows) throw Error(ErrorCode::kLengthMismatch, "one label per feature row is required");
  const int k = static_cast<int>(classes.size());
  CrossValidationReport report;
  report.folds.resize(static_cast<std::size_t>(plan.fold_count));

  auto run_fold = [&](int f) {
    auto pick = [&](Partition p, FeatureMatrix& x, std::vector<int>& y) {
      const auto idx = plan.indices(f, p);
      x = features.select(idx);
      y.clear();
      for (auto i : idx) y.push_back(labels[i]);
    };
    FeatureMatrix xt, xv, xs;
    std::vector<int> yt, yv, ys;
    pick(Partition::kTrain, xt, yt);
    pick(Partition::kVal, xv, yv);
    pick(Partition::kTest, xs, ys);
    TrainConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(f);
    const auto trained = train_head(xt, yt, xv.rows > 0 ? &xv : nullptr, yv, k, positive_class, c);
    std::vector<int> pred;
    for (std::size_t r = 0; r < xs.rows; ++r) pred.push_back(head_predict(trained.head, xs.row(r), positive_class));
    FoldResult fr;
    fr.fold = f;
    fr.cm = confusion(ys, pred, k, classes);
    fr.metrics = metrics(fr.cm, positive_class);
    fr.best_epoch = trained.best_epoch;
    report.folds[static_cast<std::size_t>(f)] = std::move(fr);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(plan.fold_count)));
  if (workers <= 1) {
    for (int f = 0; f < plan.fold_count; ++f) run_fold(f);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(plan.fold_count));
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int f = static_cast<int>(w); f < plan.fold_count; f += static_cast<int>(workers)) {
          try {
            run_fold(f);
          } catch (...) {
            errors[static_cast<std::size_t>(f)] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  auto collect = [&](Metric MetricsReport::*field) {
    std::vector<std::optional<double>> v;
    for (const auto& f : report.folds) v.push_back((f.metrics.*field).value);
    return aggregate(v);
  };
  report.accuracy = collect(&MetricsReport::accuracy);
  report.precision = collect(&MetricsReport::precision);
  report.recall = collect(&MetricsReport::recall);
  report.f1 = collect(&MetricsReport::f1);
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string show(const Metric& m) { return m.value ? fixed(*m.value) : "n/a (" + m.reason + ")"; }

std::string show(const Aggregate& a) {
  if (!a.mean) return "n/a";
  return fixed(*a.mean) + " +/- " + (a.sd ? fixed(*a.sd) : std::string("n/a"));
}

json metric_json(const Metric& m) {
  if (m.value) return *m.value;
  return json{{"absent", m.reason}};
}

json aggregate_json(const Aggregate& a) {
  json j;
  j["mean"] = a.mean ? json(*a.mean) : json(nullptr);
  j["sd"] = a.sd ? json(*a.sd) : json(nullptr);
  j["n"] = a.n;
  return j;
}

json report_json(const ConfusionMatrix& cm, const MetricsReport& r) {
  json j;
  j["classes"] = cm.classes;
  j["confusion"] = cm.counts;
  j["positive_class"] = cm.classes.at(static_cast<std::size_t>(r.positive_class));
  j["averaging"] = r.macro ? "macro" : "positive-class";
  j["accuracy"] = metric_json(r.accuracy);
  j["precision"] = metric_json(r.precision);
  j["recall"] = metric_json(r.recall);
  j["f1"] = metric_json(r.f1);
  json per = json::array();
  for (const auto& c : r.per_class) {
    per.push_back({{"class", c.name},
                   {"tp", c.counts.tp},
                   {"fp", c.counts.fp},
                   {"fn", c.counts.fn},
                   {"tn", c.counts.tn},
                   {"precision", metric_json(c.precision)},
                   {"recall", metric_json(c.recall)},
                   {"f1", metric_json(c.f1)}});
  }
  j["per_class"] = per;
  return j;
}

}  // namespace

std::string confusion_grid(const ConfusionMatrix& cm) {
  std::size_t w = std::string("actual \\ predicted").size();
  std::size_t cell = 1;
  for (const auto& c : cm.classes) {
    w = std::max(w, c.size());
    cell = std::max(cell, c.size());
  }
  for (const auto& row : cm.counts) {
    for (auto n : row) cell = std::max(cell, std::to_string(n).size());
  }
  auto pad = [](const std::string& s, std::size_t n, bool right) {
    const std::string fill(n > s.size() ? n - s.size() : 0, ' ');
    return right ? fill + s : s + fill;
  };
  std::string out = pad("actual \\ predicted", w, false);
  for (const auto& c : cm.classes) out += "  " + pad(c, cell, true);
  out += "\n";
  for (std::size_t a = 0; a < cm.size(); ++a) {
    out += pad(cm.classes[a], w, false);
    for (auto n : cm.counts[a]) out += "  " + pad(std::to_string(n), cell, true);
    out += "\n";
  }
  return out;
}

std::string metrics_text(const MetricsReport& r) {
  std::string out;
  const std::string tag = r.macro ? " (macro)" : "";
  out += "accuracy   " + show(r.accuracy) + "\n";
  out += "precision  " + show(r.precision) + tag + "\n";
  out += "recall     " + show(r.recall) + tag + "\n";
  out += "f1         " + show(r.f1) + tag + "\n";
  if (r.per_class.size() > 2) {
    out += "\nclass\tprecision\trecall\tf1\n";
    for (const auto& c : r.per_class) {
      out += c.name + "\t" + show(c.precision) + "\t" + show(c.recall) + "\t" + show(c.f1) + "\n";
    }
  }
  return out;
}

std::string metrics_json(const ConfusionMatrix& cm, const MetricsReport& r) { return report_json(cm, r).dump(2) + "\n"; }

std::string cross_validation_text(const CrossValidationReport& r) {
  std::string out = "fold\taccuracy\tprecision\trecall\tf1\tbest_epoch\n";
  for (const auto& f : r.folds) {
    out += std::to_string(f.fold + 1) + "\t" + show(f.metrics.accuracy) + "\t" + show(f.metrics.precision) + "\t" +
           show(f.metrics.recall) + "\t" + show(f.metrics.f1) + "\t" + std::to_string(f.best_epoch) + "\n";
  }
  out += "mean\t" + show(r.accuracy) + "\t" + show(r.precision) + "\t" + show(r.recall) + "\t" + show(r.f1) + "\n";
  return out;
}

std::string cross_validation_json(const CrossValidationReport& r) {
  json j;
  json folds = json::array();
  for (const auto& f : r.folds) {
    json fj = report_json(f.cm, f.metrics);
    fj["fold"] = f.fold + 1;
    fj["best_epoch"] = f.best_epoch;
    folds.push_back(fj);
  }
  j["folds"] = folds;
  j["aggregate"] = {{"accuracy", aggregate_json(r.accuracy)},
                    {"precision", aggregate_json(r.precision)},
                    {"recall", aggregate_json(r.recall)},
                    {"f1", aggregate_json(r.f1)}};
  return j.dump(2) + "\n";
}

std::vector<int> predict_items(const ModelBundle& b, const DatasetManifest& m, std::span<const std::size_t> indices,
                               unsigned threads) {
  std::vector<int> out(indices.size());
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(workers, indices.size())));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) out[k] = predict(b, load_item(m, indices[k])).class_index;
  };
  if (workers == 1) {
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

}  // namespace edgeinfer
