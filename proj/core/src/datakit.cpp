#include "edgeinfer/datakit.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "edgeinfer/error.hpp"
#include "edgeinfer/random.hpp"

namespace edgeinfer {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kManifestHeader = "#edgeinfer-dataset v1";
constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& v) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

double sample(const Image& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double wx = x - x0, wy = y - y0;
  const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
  const double bottom = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
  return top * (1 - wy) + bottom * wy;
}

}  // namespace

std::string_view to_string(Origin origin) { return origin == Origin::kOriginal ? "original" : "augmented"; }

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kVal: return "val";
    case Partition::kTest: return "test";
  }
  return "?";
}

std::vector<std::size_t> DatasetManifest::class_counts() const {
  std::vector<std::size_t> counts(classes.size());
  for (const auto& it : items) ++counts.at(static_cast<std::size_t>(it.class_index));
  return counts;
}

std::size_t DatasetManifest::original_count() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const DatasetItem& i) { return i.origin == Origin::kOriginal; }));
}

fs::path DatasetManifest::resolve(const DatasetItem& item) const {
  const fs::path p(item.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::size_t DatasetManifest::origin_of(std::size_t index) const {
  const auto& it = items.at(index);
  return it.origin == Origin::kOriginal ? index : it.parent.value();
}

// ---------------------------------------------------------------------------
// Ingest

IngestResult ingest(const fs::path& root, bool verify_decode) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::kIo, "dataset root " + root.string() + " is not a directory", root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  IngestResult r;
  r.manifest.base_dir = root;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    const int cls = static_cast<int>(r.manifest.classes.size());
    std::size_t usable = 0;
    for (const auto& f : files) {
      const std::string rel = f.lexically_relative(root).generic_string();
      if (!has_image_extension(f)) {
        r.skipped.push_back(rel);
        continue;
      }
      if (verify_decode) {
        try {
          (void)read_image(f);
        } catch (const Error&) {
          r.unreadable.push_back(rel);
          continue;
        }
      }
      r.manifest.items.push_back({rel, cls, Origin::kOriginal, 0, std::nullopt});
      ++usable;
    }
    if (usable == 0) {
      throw Error(ErrorCode::kEmptyClassDirectory, "class directory " + dir.string() + " holds no usable image",
                  dir.filename().string());
    }
    r.manifest.classes.push_back(dir.filename().string());
  }
  if (r.manifest.items.empty()) throw Error(ErrorCode::kEmptyDataset, "no class directories under " + root.string(), root.string());
  return r;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentDraw draw_augmentation(std::uint64_t seed, const AugmentRanges& r) {
  std::mt19937_64 rng(seed);
  AugmentDraw d;
  d.rotation_deg = rnd::uniform(rng, -r.max_rotation_deg, r.max_rotation_deg);
  d.contrast = rnd::uniform(rng, r.contrast_lo, r.contrast_hi);
  d.zoom = rnd::uniform(rng, r.zoom_lo, r.zoom_hi);
  return d;
}

Image apply_augmentation(const Image& src, const AugmentDraw& d) {
  if (src.width <= 0 || src.height <= 0) throw Error(ErrorCode::kInvalidArgument, "cannot augment an empty image");
  Image out{src.width, src.height, std::vector<std::uint8_t>(src.rgb.size())};
  const double theta = d.rotation_deg * kPi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cx = (src.width - 1) / 2.0, cy = (src.height - 1) / 2.0;
  std::vector<double> geo(src.rgb.size());
  std::array<double, 3> mean{};
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      // Inverse map: undo zoom, then rotation.
      const double dx = (x - cx) / d.zoom, dy = (y - cy) / d.zoom;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      for (int c = 0; c < 3; ++c) {
        const double v = sample(src, sx, sy, c);
        geo[(static_cast<std::size_t>(y) * src.width + x) * 3 + c] = v;
        mean[c] += v;
      }
    }
  }
  const double n = static_cast<double>(src.width) * src.height;
  for (auto& m : mean) m /= n;
  for (std::size_t i = 0; i < geo.size(); ++i) {
    const double m = mean[i % 3];
    out.rgb[i] = clamp_byte(m + (geo[i] - m) * d.contrast);
  }
  return out;
}

DatasetManifest augment(const DatasetManifest& m, int factor, std::uint64_t seed) {
  if (factor < 1) throw Error(ErrorCode::kInvalidArgument, "augmentation factor must be at least 1");
  DatasetManifest out;
  out.classes = m.classes;
  out.base_dir = m.base_dir;
  std::size_t original_no = 0;
  for (const auto& item : m.items) {
    if (item.origin != Origin::kOriginal) continue;
    const std::size_t parent = out.items.size();
    out.items.push_back(item);
    const std::string stem = fs::path(item.path).stem().string();
    for (int k = 1; k < factor; ++k) {
      DatasetItem a;
      a.class_index = item.class_index;
      a.origin = Origin::kAugmented;
      a.seed = rnd::derive(seed, {original_no, static_cast<std::uint64_t>(k)});
      a.parent = parent;
      a.path = "augmented/" + m.classes.at(static_cast<std::size_t>(item.class_index)) + "/" + stem + "_aug" +
               std::to_string(k) + ".png";
      out.items.push_back(std::move(a));
    }
    ++original_no;
  }
  return out;
}

Image load_item(const DatasetManifest& m, std::size_t index, const AugmentRanges& ranges) {
  const auto& item = m.items.at(index);
  const fs::path p = m.resolve(item);
  if (item.origin == Origin::kOriginal) return read_image(p);
  std::error_code ec;
  if (fs::is_regular_file(p, ec)) return read_image(p);
  return apply_augmentation(read_image(m.resolve(m.items.at(item.parent.value()))),
                            draw_augmentation(item.seed, ranges));
}

void materialize(const DatasetManifest& m, const AugmentRanges& ranges) {
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    const auto& item = m.items[i];
    if (item.origin != Origin::kAugmented) continue;
    const fs::path p = m.resolve(item);
    fs::create_directories(p.parent_path());
    write_png(apply_augmentation(read_image(m.resolve(m.items.at(item.parent.value()))),
                                 draw_augmentation(item.seed, ranges)),
              p);
  }
}

// ---------------------------------------------------------------------------
// Manifest files

std::string manifest_table(const DatasetManifest& m) {
  std::string out(kManifestHeader);
  out += "\n#classes";
  for (const auto& c : m.classes) out += "\t" + c;
  out += "\npath\tclass\torigin\tseed\tparent\n";
  for (const auto& it : m.items) {
    out += it.path + "\t" + m.classes.at(static_cast<std::size_t>(it.class_index)) + "\t" +
           std::string(to_string(it.origin)) + "\t" + std::to_string(it.seed) + "\t" +
           (it.parent ? std::to_string(*it.parent) : std::string("-")) + "\n";
  }
  return out;
}

DatasetManifest parse_manifest_table(const std::string& text, const fs::path& base_dir) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header = false, classes = false;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kParseError, "dataset manifest line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kManifestHeader) fail("expected '" + std::string(kManifestHeader) + "'");
      header = true;
      continue;
    }
    if (line.rfind("#classes", 0) == 0) {
      auto f = split_tabs(line);
      m.classes.assign(f.begin() + 1, f.end());
      classes = true;
      continue;
    }
    if (line.empty() || line[0] == '#' || line.rfind("path\t", 0) == 0) continue;
    if (!classes) fail("item before the #classes line");
    const auto f = split_tabs(line);
    if (f.size() != 5) fail("expected 5 tab-separated fields");
    DatasetItem it;
    it.path = f[0];
    const auto cls = std::find(m.classes.begin(), m.classes.end(), f[1]);
    if (cls == m.classes.end()) fail("unknown class '" + f[1] + "'");
    it.class_index = static_cast<int>(cls - m.classes.begin());
    if (f[2] == "original") {
      it.origin = Origin::kOriginal;
    } else if (f[2] == "augmented") {
      it.origin = Origin::kAugmented;
    } else {
      fail("origin must be original or augmented");
    }
    if (!parse_number(f[3], it.seed)) fail("bad seed");
    if (f[4] != "-") {
      std::size_t parent = 0;
      if (!parse_number(f[4], parent) || parent >= m.items.size()) fail("parent must name an earlier item");
      if (m.items[parent].origin != Origin::kOriginal) fail("parent must be an original item");
      it.parent = parent;
    }
    if ((it.origin == Origin::kAugmented) != it.parent.has_value()) fail("augmented items (only) need a parent");
    m.items.push_back(std::move(it));
  }
  if (!header) throw Error(ErrorCode::kParseError, "dataset manifest is empty");
  return m;
}

DatasetManifest rebase(const DatasetManifest& m, const fs::path& new_base) {
  DatasetManifest out = m;
  const fs::path target = fs::absolute(new_base).lexically_normal();
  for (auto& it : out.items) {
    if (fs::path(it.path).is_absolute()) continue;
    const fs::path abs = fs::absolute(m.base_dir / it.path).lexically_normal();
    it.path = abs.lexically_relative(target).generic_string();
  }
  out.base_dir = new_base;
  return out;
}

void save_manifest(const DatasetManifest& m, const fs::path& file) {
  const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  const std::string text = manifest_table(rebase(m, dir));
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string(), file.string());
  out << text;
}

DatasetManifest load_manifest(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + file.string(), file.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_manifest_table(text, file.has_parent_path() ? file.parent_path() : fs::path("."));
}

// ---------------------------------------------------------------------------
// Splitting

std::vector<std::size_t> SplitPlan::indices(int fold, Partition p) const {
  std::vector<std::size_t> out;
  const auto& a = assignment.at(static_cast<std::size_t>(fold));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == p) out.push_back(i);
  }
  return out;
}

PartitionSizes partition_sizes(std::size_t n) {
  PartitionSizes s;
  s.test = (n + 5) / 10;
  s.val = (2 * n + 5) / 10;
  s.train = n - s.test - s.val;
  return s;
}

SplitPlan split(const DatasetManifest& m, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::kInvalidArgument, "split needs at least 2 folds");
  if (m.items.empty()) throw Error(ErrorCode::kEmptyDataset, "cannot split an empty dataset");
  std::vector<std::vector<std::size_t>> originals(m.classes.size());
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    if (m.items[i].origin == Origin::kOriginal) originals.at(static_cast<std::size_t>(m.items[i].class_index)).push_back(i);
  }
  for (std::size_t c = 0; c < originals.size(); ++c) {
    if (originals[c].size() < static_cast<std::size_t>(folds)) {
      throw Error(ErrorCode::kClassTooSmall, "class '" + m.classes[c] + "' has " + std::to_string(originals[c].size()) +
                                                 " originals, fewer than " + std::to_string(folds) + " folds",
                  m.classes[c]);
    }
  }

  SplitPlan plan{folds, seed, {}};
  for (int f = 0; f < folds; ++f) {
    std::vector<Partition> of_original(m.items.size(), Partition::kTrain);
    for (std::size_t c = 0; c < originals.size(); ++c) {
      auto order = originals[c];
      std::mt19937_64 rng(rnd::derive(seed, {static_cast<std::uint64_t>(f), c}));
      rnd::shuffle(order, rng);
      const auto sizes = partition_sizes(order.size());
      for (std::size_t k = 0; k < order.size(); ++k) {
        of_original[order[k]] = k < sizes.test ? Partition::kTest
                                : k < sizes.test + sizes.val ? Partition::kVal
                                                             : Partition::kTrain;
      }
    }
    std::vector<Partition> a(m.items.size());
    for (std::size_t i = 0; i < m.items.size(); ++i) a[i] = of_original[m.origin_of(i)];
    plan.assignment.push_back(std::move(a));
  }
  return plan;
}

std::string split_table(const DatasetManifest& m, const SplitPlan& plan) {
  std::string out = "fold\titem\tpath\tpartition\n";
  for (int f = 0; f < plan.fold_count; ++f) {
    const auto& a = plan.assignment[static_cast<std::size_t>(f)];
    for (std::size_t i = 0; i < a.size(); ++i) {
      out += std::to_string(f + 1) + "\t" + std::to_string(i) + "\t" + m.items[i].path + "\t" + std::string(to_string(a[i])) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic lesions

namespace {

struct Rgb {
  double r, g, b;
};

void blend(std::vector<double>& px, int size, int x, int y, const Rgb& c, double alpha) {
  if (x < 0 || y < 0 || x >= size || y >= size || alpha <= 0.0) return;
  const std::size_t i = (static_cast<std::size_t>(y) * size + x) * 3;
  px[i] += (c.r - px[i]) * alpha;
  px[i + 1] += (c.g - px[i + 1]) * alpha;
  px[i + 2] += (c.b - px[i + 2]) * alpha;
}

Rgb jitter(std::mt19937_64& rng, Rgb c, double amount) {
  return {c.r + rnd::uniform(rng, -amount, amount), c.g + rnd::uniform(rng, -amount, amount),
          c.b + rnd::uniform(rng, -amount, amount)};
}

void pustule(std::vector<double>& px, int size, std::mt19937_64& rng) {
  const double cx = rnd::uniform(rng, 0.15, 0.85) * size, cy = rnd::uniform(rng, 0.15, 0.85) * size;
  const double r = rnd::uniform(rng, 0.05, 0.10) * size;
  const Rgb ring = jitter(rng, {196, 72, 70}, 20);
  const Rgb core = jitter(rng, {238, 222, 196}, 12);
  for (int y = static_cast<int>(cy - r - 2); y <= static_cast<int>(cy + r + 2); ++y) {
    for (int x = static_cast<int>(cx - r - 2); x <= static_cast<int>(cx + r + 2); ++x) {
      const double d = std::hypot(x - cx, y - cy) / r;
      blend(px, size, x, y, ring, std::clamp(1.15 - d, 0.0, 1.0) * 0.95);
      blend(px, size, x, y, core, std::clamp(0.45 - d, 0.0, 0.45) / 0.45);
    }
  }
}

void patch(std::vector<double>& px, int size, std::mt19937_64& rng) {
  const double cx = rnd::uniform(rng, 0.25, 0.75) * size, cy = rnd::uniform(rng, 0.25, 0.75) * size;
  const Rgb color = jitter(rng, {104, 66, 42}, 14);
  const int lobes = 3 + static_cast<int>(rnd::index(rng, 3));
  for (int l = 0; l < lobes; ++l) {
    const double ex = cx + rnd::uniform(rng, -0.12, 0.12) * size, ey = cy + rnd::uniform(rng, -0.12, 0.12) * size;
    const double ax = rnd::uniform(rng, 0.06, 0.16) * size, ay = rnd::uniform(rng, 0.04, 0.12) * size;
    const double t = rnd::uniform(rng, 0.0, kPi);
    const double ct = std::cos(t), st = std::sin(t);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double u = ((x - ex) * ct + (y - ey) * st) / ax;
        const double v = (-(x - ex) * st + (y - ey) * ct) / ay;
        const double d = std::sqrt(u * u + v * v);
        blend(px, size, x, y, color, std::clamp(1.2 - d, 0.0, 1.0) * 0.8);
      }
    }
  }
}

}  // namespace

Image synth_image(int class_index, std::uint64_t seed, int size) {
  if (class_index < 0 || class_index > 1) throw Error(ErrorCode::kInvalidArgument, "synthetic classes are 0 and 1");
  if (size < 8) throw Error(ErrorCode::kInvalidArgument, "synthetic images need at least 8 pixels per side");
  std::mt19937_64 rng(seed);
  // Class 0 skin carries a reddish erythema tone.
  const Rgb base = class_index == 0 ? Rgb{228, 168, 150} : Rgb{216, 188, 160};
  const Rgb skin = jitter(rng, base, 14);
  const double gx = rnd::uniform(rng, -12, 12), gy = rnd::uniform(rng, -12, 12);
  std::vector<double> px(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double shade = gx * (x / static_cast<double>(size) - 0.5) + gy * (y / static_cast<double>(size) - 0.5);
      const std::size_t i = (static_cast<std::size_t>(y) * size + x) * 3;
      px[i] = skin.r + shade;
      px[i + 1] = skin.g + shade;
      px[i + 2] = skin.b + shade;
    }
  }
  if (class_index == 0) {
    const int n = 8 + static_cast<int>(rnd::index(rng, 7));
    for (int k = 0; k < n; ++k) pustule(px, size, rng);
  } else {
    const int n = 2 + static_cast<int>(rnd::index(rng, 2));
    for (int k = 0; k < n; ++k) patch(px, size, rng);
  }
  Image img{size, size, std::vector<std::uint8_t>(px.size())};
  for (std::size_t i = 0; i < px.size(); ++i) img.rgb[i] = clamp_byte(px[i] + 6.0 * rnd::normal(rng));
  return img;
}

DatasetManifest synthesize(const fs::path& out, const SynthOptions& o) {
  if (o.per_class == 0) throw Error(ErrorCode::kInvalidArgument, "per-class count must be positive");
  DatasetManifest m;
  m.classes = kSynthClasses;
  m.base_dir = out;
  for (int c = 0; c < static_cast<int>(kSynthClasses.size()); ++c) {
    const fs::path dir = out / kSynthClasses[static_cast<std::size_t>(c)];
    fs::create_directories(dir);
    for (std::size_t k = 0; k < o.per_class; ++k) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%04zu.png", kSynthClasses[static_cast<std::size_t>(c)].c_str(), k);
      write_png(synth_image(c, rnd::derive(o.seed, {static_cast<std::uint64_t>(c), k}), o.size), dir / name);
      m.items.push_back({kSynthClasses[static_cast<std::size_t>(c)] + "/" + name, c, Origin::kOriginal, 0, std::nullopt});
    }
  }
  return m;
}

}  // namespace edgeinfer
