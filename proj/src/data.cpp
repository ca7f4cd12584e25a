#include "maq2l/data.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "maq2l/error.hpp"
#include "maq2l/parallel.hpp"

namespace maq2l {

bool SampleRecord::normal() const {
  return std::all_of(labels.begin(), labels.end(), [](std::uint8_t v) { return v == 0; });
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over a mixed pair
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

const char* const kShapeNames[] = {"square", "disc", "ring", "hbar", "vbar", "cross", "diagonal", "checker"};

// Membership of pixel (x, y) of an s×s motif cell.
bool motif_pixel(MotifShape shape, std::size_t x, std::size_t y, std::size_t s) {
  const double c = (static_cast<double>(s) - 1.0) / 2.0;
  const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
  const double r = static_cast<double>(s) / 2.0;
  const double dist = std::sqrt(dx * dx + dy * dy);
  const std::size_t third_lo = s / 3, third_hi = s - s / 3;
  switch (shape) {
    case MotifShape::square:
      return true;
    case MotifShape::disc:
      return dist <= r;
    case MotifShape::ring:
      return dist <= r && dist >= r - std::max(1.5, static_cast<double>(s) / 4.0);
    case MotifShape::hbar:
      return y >= third_lo && y < third_hi;
    case MotifShape::vbar:
      return x >= third_lo && x < third_hi;
    case MotifShape::cross:
      return (y >= third_lo && y < third_hi) || (x >= third_lo && x < third_hi);
    case MotifShape::diagonal: {
      const double w = std::max(1.0, static_cast<double>(s) / 6.0);
      return std::abs(static_cast<double>(x) - static_cast<double>(y)) <= w;
    }
    case MotifShape::checker: {
      const std::size_t b = std::max<std::size_t>(2, s / 4);
      return ((x / b) + (y / b)) % 2 == 0;
    }
  }
  return false;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<std::uint8_t> sample_labels(const SyntheticSpec& spec, const Eigen::MatrixXd& chol,
                                        const std::vector<double>& cut, std::uint64_t seed) {
  const std::size_t n = spec.num_classes();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd e(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) e(static_cast<Eigen::Index>(i)) = gauss(rng);
  const Eigen::VectorXd z = chol * e;
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = z(static_cast<Eigen::Index>(i)) < cut[i] ? 1 : 0;
  return labels;
}

GeneratedSample render(const SyntheticSpec& spec, std::vector<std::uint8_t> labels, std::size_t index) {
  const std::size_t s = spec.image_size;
  std::mt19937_64 rng(derive_seed(derive_seed(spec.seed, index), 0x6d6f74));
  std::vector<double> canvas(s * s, 100.0);
  if (std::bernoulli_distribution(spec.dark_zone_rate)(rng)) {
    const double c = (static_cast<double>(s) - 1.0) / 2.0;
    const double r = static_cast<double>(s) / 5.0;
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
        if (dx * dx + dy * dy <= r * r) canvas[y * s + x] = 35.0;
      }
  }
  GeneratedSample out;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (!labels[n]) continue;
    const Motif& m = spec.motifs[n];
    const std::size_t side = uniform_index(rng, m.size_lo, m.size_hi);
    const double span = static_cast<double>(s - side);
    const auto lo_x = static_cast<std::size_t>(std::floor(m.x_lo * span));
    const auto hi_x = static_cast<std::size_t>(std::floor(m.x_hi * span));
    const auto lo_y = static_cast<std::size_t>(std::floor(m.y_lo * span));
    const auto hi_y = static_cast<std::size_t>(std::floor(m.y_hi * span));
    const std::size_t ox = uniform_index(rng, lo_x, std::max(lo_x, hi_x));
    const std::size_t oy = uniform_index(rng, lo_y, std::max(lo_y, hi_y));
    const double level = static_cast<double>(uniform_index(rng, m.intensity_lo, m.intensity_hi));
    Box box{n, s, s, 0, 0};
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        if (!motif_pixel(m.shape, x, y, side)) continue;
        canvas[(oy + y) * s + ox + x] = level;
        box.x0 = std::min(box.x0, ox + x);
        box.y0 = std::min(box.y0, oy + y);
        box.x1 = std::max(box.x1, ox + x + 1);
        box.y1 = std::max(box.y1, oy + y + 1);
      }
    out.boxes.push_back(box);
  }
  std::normal_distribution<double> noise(0.0, spec.noise);
  out.image = Image(s, s, 1);
  for (std::size_t i = 0; i < s * s; ++i) {
    const double v = spec.noise > 0.0 ? canvas[i] + noise(rng) : canvas[i];
    out.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  out.record.labels = std::move(labels);
  out.record.sequence_id = static_cast<std::int64_t>(index / spec.sequence_length);
  return out;
}

std::pair<std::uint8_t, std::uint8_t> parse_band(const std::string& key, const std::string& v) {
  const auto parts = split(v, ':');
  if (parts.size() != 2) throw ConfigError("config key '" + key + "': expected lo:hi, got '" + v + "'");
  FlatConfig tmp;
  tmp.set("lo", trim(parts[0]));
  tmp.set("hi", trim(parts[1]));
  const auto lo = tmp.integer("lo", 0), hi = tmp.integer("hi", 0);
  if (lo < 0 || hi > 255 || lo > hi) throw ConfigError("config key '" + key + "': band must satisfy 0<=lo<=hi<=255");
  return {static_cast<std::uint8_t>(lo), static_cast<std::uint8_t>(hi)};
}

}  // namespace

MotifShape parse_motif_shape(const std::string& name) {
  for (std::size_t i = 0; i < std::size(kShapeNames); ++i)
    if (name == kShapeNames[i]) return static_cast<MotifShape>(i);
  throw ConfigError("unknown motif shape '" + name + "'");
}

std::string motif_shape_name(MotifShape shape) { return kShapeNames[static_cast<std::size_t>(shape)]; }

void SyntheticSpec::validate() const {
  const std::size_t n = num_classes();
  if (n == 0) throw ConfigError("synthetic spec needs at least one class");
  if (image_size < 4) throw ConfigError("image_size must be at least 4");
  if (prevalence.size() != n) {
    throw ConfigError("prevalence has " + std::to_string(prevalence.size()) + " entries for " + std::to_string(n) +
                      " classes");
  }
  for (double p : prevalence)
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("prevalences must lie in [0, 1)");
  if (motifs.size() != n) throw ConfigError("one motif per class is required");
  for (std::size_t i = 0; i < n; ++i) {
    const Motif& m = motifs[i];
    if (m.size_lo < 1 || m.size_lo > m.size_hi) throw ConfigError("motif " + std::to_string(i) + ": bad size range");
    if (m.size_hi > image_size) {
      throw ConfigError("motif " + std::to_string(i) + " (" + std::to_string(m.size_hi) + " px) is larger than the " +
                        std::to_string(image_size) + " px image");
    }
    if (m.intensity_lo > m.intensity_hi) throw ConfigError("motif " + std::to_string(i) + ": bad intensity band");
    for (double f : {m.x_lo, m.x_hi, m.y_lo, m.y_hi})
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("motif placement fractions must lie in [0, 1]");
    if (m.x_lo > m.x_hi || m.y_lo > m.y_hi) throw ConfigError("motif placement range is inverted");
  }
  if (cooccurrence.size() != n) throw ConfigError("co-occurrence matrix must be N×N");
  for (std::size_t i = 0; i < n; ++i) {
    if (cooccurrence[i].size() != n) throw ConfigError("co-occurrence matrix must be N×N");
    if (cooccurrence[i][i] != 0.0) throw ConfigError("co-occurrence diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j)
      if (cooccurrence[i][j] != cooccurrence[j][i]) throw ConfigError("co-occurrence matrix must be symmetric");
  }
  if (sequence_length == 0) throw ConfigError("sequence_length must be positive");
  if (!(dark_zone_rate >= 0.0 && dark_zone_rate <= 1.0)) throw ConfigError("dark_zone_rate must lie in [0, 1]");
  if (noise < 0.0) throw ConfigError("noise must be non-negative");
}

SyntheticSpec SyntheticSpec::desk_default(std::size_t num_classes, std::size_t image_size) {
  SyntheticSpec spec;
  spec.image_size = image_size;
  spec.table = ClassTable::sewer_ml().first(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) spec.prevalence.push_back(0.5 * std::pow(0.55, static_cast<double>(i)));
  spec.cooccurrence.assign(num_classes, std::vector<double>(num_classes, 0.0));
  for (auto [a, b, r] : {std::tuple{0, 1, 0.4}, {2, 4, 0.3}, {3, 5, 0.3}}) {
    if (static_cast<std::size_t>(b) >= num_classes) continue;
    spec.cooccurrence[a][b] = spec.cooccurrence[b][a] = r;
  }
  for (std::size_t i = 0; i < num_classes; ++i) {
    Motif m;
    m.shape = static_cast<MotifShape>(i % std::size(kShapeNames));
    const auto centre = static_cast<int>(245 - (11 * i) % 88);
    m.intensity_lo = static_cast<std::uint8_t>(centre - 6);
    m.intensity_hi = static_cast<std::uint8_t>(centre + 6);
    m.size_lo = std::max<std::size_t>(3, image_size / 4);
    m.size_hi = std::max(m.size_lo, image_size * 5 / 16);
    spec.motifs.push_back(m);
  }
  return spec;
}

std::vector<std::array<std::string, 2>> SyntheticSpec::key_help() {
  return {
      {"image_size", "square image side in pixels (32)"},
      {"num_classes", "number of classes taken from the head of the class table (8)"},
      {"classes", "comma-separated class codes; overrides num_classes"},
      {"seed", "generator seed (1)"},
      {"prevalence", "comma-separated per-class prevalences in [0,1)"},
      {"prevalence_head", "first prevalence of the geometric default (0.5)"},
      {"prevalence_ratio", "ratio of the geometric default (0.55)"},
      {"cooccurrence", "comma-separated i:j:r latent correlations between class indices"},
      {"sequence_length", "images per sequence_id (10)"},
      {"min_class_count", "every class gets at least this many positives (0)"},
      {"dark_zone_rate", "probability of the class-free dark disc (0.3)"},
      {"noise", "pixel noise standard deviation (6)"},
      {"motif.<i>.shape", "square|disc|ring|hbar|vbar|cross|diagonal|checker"},
      {"motif.<i>.intensity", "lo:hi gray band"},
      {"motif.<i>.size", "lo:hi side of the motif cell in pixels"},
      {"motif.<i>.region", "x_lo:x_hi:y_lo:y_hi placement fractions"},
  };
}

SyntheticSpec SyntheticSpec::from_config(const FlatConfig& cfg) {
  static const std::set<std::string> plain = {"image_size",      "num_classes",      "classes",
                                              "seed",            "prevalence",       "prevalence_head",
                                              "prevalence_ratio", "cooccurrence",    "sequence_length",
                                              "min_class_count", "dark_zone_rate",   "noise"};
  for (const auto& [key, value] : cfg.values()) {
    if (plain.count(key)) continue;
    const auto parts = split(key, '.');
    if (parts.size() == 3 && parts[0] == "motif" &&
        (parts[2] == "shape" || parts[2] == "intensity" || parts[2] == "size" || parts[2] == "region"))
      continue;
    throw ConfigError("unknown spec key '" + key + "'");
  }

  const std::size_t size = cfg.count("image_size", 32);
  ClassTable table;
  if (cfg.has("classes")) {
    table = ClassTable::sewer_ml().subset(cfg.list("classes"));
  } else {
    const std::size_t n = cfg.count("num_classes", 8);
    if (n == 0 || n > ClassTable::sewer_ml().size()) throw ConfigError("num_classes must be in [1, 17]");
    table = ClassTable::sewer_ml().first(n);
  }
  const std::size_t n = table.size();
  SyntheticSpec spec = desk_default(n, size);
  spec.table = table;
  if (cfg.has("prevalence")) {
    spec.prevalence = cfg.reals("prevalence");
  } else if (cfg.has("prevalence_head") || cfg.has("prevalence_ratio")) {
    const double head = cfg.real("prevalence_head", 0.5), ratio = cfg.real("prevalence_ratio", 0.55);
    for (std::size_t i = 0; i < n; ++i) spec.prevalence[i] = head * std::pow(ratio, static_cast<double>(i));
  }
  if (cfg.has("cooccurrence")) {
    spec.cooccurrence.assign(n, std::vector<double>(n, 0.0));
    for (const auto& entry : cfg.list("cooccurrence")) {
      const auto f = split(entry, ':');
      if (f.size() != 3) throw ConfigError("cooccurrence entries are i:j:r, got '" + entry + "'");
      FlatConfig tmp;
      tmp.set("i", trim(f[0]));
      tmp.set("j", trim(f[1]));
      tmp.set("r", trim(f[2]));
      const std::size_t i = tmp.count("i", 0), j = tmp.count("j", 0);
      if (i >= n || j >= n || i == j) throw ConfigError("cooccurrence pair '" + entry + "' is out of range");
      spec.cooccurrence[i][j] = spec.cooccurrence[j][i] = tmp.real("r", 0.0);
    }
  }
  spec.seed = static_cast<std::uint64_t>(cfg.integer("seed", 1));
  spec.sequence_length = cfg.count("sequence_length", spec.sequence_length);
  spec.min_class_count = cfg.count("min_class_count", spec.min_class_count);
  spec.dark_zone_rate = cfg.real("dark_zone_rate", spec.dark_zone_rate);
  spec.noise = cfg.real("noise", spec.noise);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string p = "motif." + std::to_string(i) + ".";
    Motif& m = spec.motifs[i];
    if (auto v = cfg.get(p + "shape")) m.shape = parse_motif_shape(*v);
    if (auto v = cfg.get(p + "intensity")) std::tie(m.intensity_lo, m.intensity_hi) = parse_band(p + "intensity", *v);
    if (auto v = cfg.get(p + "size")) {
      const auto parts = split(*v, ':');
      if (parts.size() != 2) throw ConfigError("config key '" + p + "size': expected lo:hi");
      FlatConfig tmp;
      tmp.set("lo", trim(parts[0]));
      tmp.set("hi", trim(parts[1]));
      m.size_lo = tmp.count("lo", 0);
      m.size_hi = tmp.count("hi", 0);
    }
    if (auto v = cfg.get(p + "region")) {
      FlatConfig tmp;
      tmp.set("r", [&] {
        std::string s = *v;
        std::replace(s.begin(), s.end(), ':', ',');
        return s;
      }());
      const auto r = tmp.reals("r");
      if (r.size() != 4) throw ConfigError("config key '" + p + "region': expected x_lo:x_hi:y_lo:y_hi");
      m.x_lo = r[0];
      m.x_hi = r[1];
      m.y_lo = r[2];
      m.y_hi = r[3];
    }
  }
  for (const auto& [key, value] : cfg.values()) {
    const auto parts = split(key, '.');
    if (parts.size() == 3 && parts[0] == "motif") {
      FlatConfig tmp;
      tmp.set("i", parts[1]);
      if (tmp.count("i", 0) >= n) throw ConfigError("spec key '" + key + "' refers to a class index out of range");
    }
  }
  spec.validate();
  return spec;
}

std::vector<GeneratedSample> generate_dataset(const SyntheticSpec& spec, std::size_t count) {
  spec.validate();
  if (count == 0) throw ConfigError("dataset count must be at least 1");
  const std::size_t n = spec.num_classes();

  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = spec.cooccurrence[i][j];
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) throw ConfigError("co-occurrence matrix plus identity is not positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();

  std::vector<double> cut(n);
  const boost::math::normal standard;
  for (std::size_t i = 0; i < n; ++i)
    cut[i] = spec.prevalence[i] <= 0.0 ? -std::numeric_limits<double>::infinity()
                                       : boost::math::quantile(standard, spec.prevalence[i]);

  std::vector<std::vector<std::uint8_t>> labels(count);
  parallel_for(count, [&](std::size_t i) { labels[i] = sample_labels(spec, chol, cut, derive_seed(spec.seed, i)); });

  if (spec.min_class_count > 0) {
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t have = 0;
      std::vector<std::pair<std::uint64_t, std::size_t>> candidates;
      for (std::size_t i = 0; i < count; ++i) {
        if (labels[i][c]) {
          ++have;
        } else {
          candidates.emplace_back(derive_seed(spec.seed ^ 0x7374726174ULL, c * count + i), i);
        }
      }
      std::sort(candidates.begin(), candidates.end());
      for (std::size_t k = 0; have < spec.min_class_count && k < candidates.size(); ++k, ++have)
        labels[candidates[k].second][c] = 1;
    }
  }

  std::vector<GeneratedSample> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = render(spec, std::move(labels[i]), i); });
  std::size_t width = 5;
  for (std::size_t c = count - 1; c >= 100000; c /= 10) ++width;
  for (std::size_t i = 0; i < count; ++i) {
    std::string id = std::to_string(i);
    out[i].record.path = "images/" + std::string(width - std::min(width, id.size()), '0') + id + ".png";
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<GeneratedSample>& samples,
                   const ClassTable& table) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  parallel_for(samples.size(), [&](std::size_t i) { write_png(dir / samples[i].record.path, samples[i].image); });
  std::vector<SampleRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.push_back(s.record);
  write_manifest(dir / "manifest.tsv", records, table);
  std::ofstream boxes(dir / "boxes.tsv");
  if (!boxes) throw IoError("cannot write " + (dir / "boxes.tsv").string());
  for (const auto& s : samples)
    for (const auto& b : s.boxes)
      boxes << s.record.path << '\t' << table[b.cls].code << '\t' << b.x0 << '\t' << b.y0 << '\t' << b.x1 << '\t'
            << b.y1 << '\n';
  if (!boxes) throw IoError("failed writing " + (dir / "boxes.tsv").string());
}

namespace {
std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

std::int64_t parse_field_int(const std::string& s, std::size_t lineno, const char* what) {
  FlatConfig tmp;
  tmp.set(what, trim(s));
  try {
    return tmp.integer(what, 0);
  } catch (const ConfigError&) {
    throw ParseError(std::string(what) + " '" + s + "' is not an integer", lineno);
  }
}
}  // namespace

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path, const ClassTable& table) {
  auto in = open_text(path);
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 2 || fields.size() > 3) {
      throw ParseError("expected 'path<TAB>sequence_id<TAB>codes', got " + std::to_string(fields.size()) + " fields",
                       lineno);
    }
    SampleRecord rec;
    rec.path = fields[0];
    if (rec.path.empty()) throw ParseError("empty image path", lineno);
    rec.sequence_id = parse_field_int(fields[1], lineno, "sequence_id");
    rec.labels.assign(table.size(), 0);
    if (fields.size() == 3) {
      for (const auto& raw : split(fields[2], ';')) {
        const std::string code = trim(raw);
        if (code.empty()) continue;
        const auto idx = table.index_of(code);
        if (!idx) throw SchemaError(path.string() + " line " + std::to_string(lineno) + ": unknown class code '" + code + "'");
        rec.labels[*idx] = 1;
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records,
                    const ClassTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) {
    if (r.labels.size() != table.size()) {
      throw DimensionError("record " + r.path + " has " + std::to_string(r.labels.size()) + " labels for " +
                           std::to_string(table.size()) + " classes");
    }
    out << r.path << '\t' << r.sequence_id << '\t';
    bool first = true;
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
      if (!r.labels[i]) continue;
      if (!first) out << ';';
      out << table[i].code;
      first = false;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::map<std::string, std::vector<Box>> load_boxes(const std::filesystem::path& path, const ClassTable& table) {
  auto in = open_text(path);
  std::map<std::string, std::vector<Box>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 6) throw ParseError("expected 6 tab-separated fields", lineno);
    const auto idx = table.index_of(trim(f[1]));
    if (!idx) throw SchemaError(path.string() + " line " + std::to_string(lineno) + ": unknown class code '" + f[1] + "'");
    Box b{*idx, 0, 0, 0, 0};
    std::size_t* dst[] = {&b.x0, &b.y0, &b.x1, &b.y1};
    for (std::size_t k = 0; k < 4; ++k) {
      const auto v = parse_field_int(f[2 + k], lineno, "coordinate");
      if (v < 0) throw ParseError("negative box coordinate", lineno);
      *dst[k] = static_cast<std::size_t>(v);
    }
    if (b.x1 <= b.x0 || b.y1 <= b.y0) throw ParseError("empty box", lineno);
    out[f[0]].push_back(b);
  }
  return out;
}

std::vector<SampleRecord> subsample_every_k(const std::vector<SampleRecord>& records, std::size_t k) {
  if (k == 0) throw ConfigError("subsampling step k must be at least 1");
  std::map<std::int64_t, std::size_t> seen;
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (seen[r.sequence_id]++ % k == 0) out.push_back(r);
  return out;
}

std::vector<Example> load_examples(const std::vector<SampleRecord>& records, const std::filesystem::path& base_dir,
                                   std::size_t size, std::size_t channels) {
  std::vector<Example> out(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto& r = records[i];
    const std::filesystem::path rel(r.path);
    const std::filesystem::path p = rel.is_absolute() ? rel : base_dir / rel;
    out[i].image = image_to_tensor(read_png(p), size, channels);
    out[i].labels.assign(r.labels.begin(), r.labels.end());
    out[i].path = r.path;
  });
  return out;
}

}  // namespace maq2l
