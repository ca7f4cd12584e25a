#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "maq2l/data.hpp"
#include "maq2l/error.hpp"

using namespace maq2l;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("maq2l_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<SampleRecord> make_records(const std::vector<std::int64_t>& seqs) {
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < seqs.size(); ++i) out.push_back({"img" + std::to_string(i) + ".png", {0}, seqs[i]});
  return out;
}

}  // namespace

TEST_CASE("all-zero prevalence yields an all-Normal dataset") {
  auto spec = SyntheticSpec::desk_default();
  std::fill(spec.prevalence.begin(), spec.prevalence.end(), 0.0);
  const auto samples = generate_dataset(spec, 200);
  for (const auto& s : samples) {
    CHECK(s.record.normal());
    CHECK(s.boxes.empty());
  }
}

TEST_CASE("independent pair at 0.5/0.5 has joint rate near 0.25") {
  auto spec = SyntheticSpec::desk_default(2, 16);
  spec.prevalence = {0.5, 0.5};
  spec.cooccurrence = {{0.0, 0.0}, {0.0, 0.0}};
  const std::size_t n = 10000;
  const auto samples = generate_dataset(spec, n);
  std::size_t both = 0;
  for (const auto& s : samples) both += s.record.labels[0] && s.record.labels[1];
  const double rate = static_cast<double>(both) / n;
  const double se = std::sqrt(0.25 * 0.75 / n);
  CHECK(std::abs(rate - 0.25) < 3.5 * se);
}

TEST_CASE("label marginals track prevalences within three standard errors") {
  const auto spec = SyntheticSpec::desk_default(8, 16);
  const std::size_t n = 10000;
  const auto samples = generate_dataset(spec, n);
  for (std::size_t c = 0; c < 8; ++c) {
    std::size_t k = 0;
    for (const auto& s : samples) k += s.record.labels[c];
    const double p = spec.prevalence[c];
    const double se = std::sqrt(p * (1 - p) / n);
    CHECK_MESSAGE(std::abs(static_cast<double>(k) / n - p) < 3.0 * se, "class " << c);
  }
}

TEST_CASE("positive co-occurrence raises the joint rate above independence") {
  const auto spec = SyntheticSpec::desk_default(8, 16);
  REQUIRE(spec.cooccurrence[0][1] > 0.0);
  const std::size_t n = 10000;
  const auto samples = generate_dataset(spec, n);
  std::size_t both = 0;
  for (const auto& s : samples) both += s.record.labels[0] && s.record.labels[1];
  const double baseline = spec.prevalence[0] * spec.prevalence[1];
  const double se = std::sqrt(baseline * (1 - baseline) / n);
  CHECK(static_cast<double>(both) / n > baseline + 3.0 * se);
}

TEST_CASE("generation is deterministic and independent of the worker count") {
  const auto spec = SyntheticSpec::desk_default();
  const auto a = generate_dataset(spec, 64);
  setenv("MAQ2L_THREADS", "3", 1);
  const auto b = generate_dataset(spec, 64);
  unsetenv("MAQ2L_THREADS");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].record == b[i].record);
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].boxes == b[i].boxes);
  }
  const fs::path d1 = scratch("det1"), d2 = scratch("det2");
  write_dataset(d1, a, spec.table);
  write_dataset(d2, b, spec.table);
  for (const char* f : {"manifest.tsv", "boxes.tsv", "images/00000.png", "images/00063.png"})
    CHECK(slurp(d1 / f) == slurp(d2 / f));

  auto other = spec;
  other.seed = spec.seed + 1;
  const auto c = generate_dataset(other, 64);
  bool differs = false;
  for (std::size_t i = 0; i < c.size(); ++i) differs = differs || !(c[i].image == a[i].image);
  CHECK(differs);
}

TEST_CASE("boxes are tight around the drawn motif") {
  auto spec = SyntheticSpec::desk_default();
  spec.noise = 0.0;
  spec.dark_zone_rate = 0.0;
  spec.prevalence.assign(8, 0.0);
  for (std::size_t c = 0; c < 8; ++c) {
    auto one = spec;
    one.prevalence[c] = 0.99;
    const auto samples = generate_dataset(one, 20);
    for (const auto& s : samples) {
      if (!s.record.labels[c]) continue;
      REQUIRE(s.boxes.size() == 1);
      const Box& b = s.boxes[0];
      CHECK(b.cls == c);
      CHECK(b.x1 <= 32);
      CHECK(b.y1 <= 32);
      const auto lit = [&](std::size_t x, std::size_t y) { return s.image.at(x, y) != 100; };
      std::size_t inside = 0, outside = 0;
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const bool in = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
          (in ? inside : outside) += lit(x, y);
        }
      CHECK(outside == 0);
      CHECK(inside > 0);
      bool top = false, bottom = false, left = false, right = false;
      for (std::size_t x = b.x0; x < b.x1; ++x) top = top || lit(x, b.y0), bottom = bottom || lit(x, b.y1 - 1);
      for (std::size_t y = b.y0; y < b.y1; ++y) left = left || lit(b.x0, y), right = right || lit(b.x1 - 1, y);
      CHECK((top && bottom && left && right));
    }
  }
}

TEST_CASE("min_class_count guarantees every class appears") {
  auto spec = SyntheticSpec::desk_default();
  spec.min_class_count = 3;
  const auto samples = generate_dataset(spec, 32);
  for (std::size_t c = 0; c < 8; ++c) {
    std::size_t k = 0;
    for (const auto& s : samples) k += s.record.labels[c];
    CHECK(k >= 3);
  }
}

TEST_CASE("spec validation") {
  auto spec = SyntheticSpec::desk_default();
  SUBCASE("motif larger than image") {
    spec.motifs[2].size_hi = 40;
    CHECK_THROWS_AS(generate_dataset(spec, 4), ConfigError);
  }
  SUBCASE("asymmetric co-occurrence") {
    spec.cooccurrence[0][2] = 0.2;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }
  SUBCASE("not positive definite") {
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) spec.cooccurrence[i][j] = i == j ? 0.0 : -0.5;
    CHECK_THROWS_AS(generate_dataset(spec, 4), ConfigError);
  }
  SUBCASE("zero count") { CHECK_THROWS_AS(generate_dataset(spec, 0), ConfigError); }
}

TEST_CASE("spec from flat config") {
  const auto cfg = FlatConfig::parse(
      "classes = RB, FS, OB\nimage_size = 24\nprevalence = 0.4,0.2,0.1\ncooccurrence = 0:2:0.25\n"
      "motif.1.shape = ring\nmotif.1.intensity = 150:160\nmotif.1.size = 5:7\nmotif.1.region = 0:0.5:0.5:1\n");
  const auto spec = SyntheticSpec::from_config(cfg);
  CHECK(spec.table.codes() == std::vector<std::string>{"RB", "FS", "OB"});
  CHECK(spec.image_size == 24);
  CHECK(spec.cooccurrence[2][0] == doctest::Approx(0.25));
  CHECK(spec.motifs[1].shape == MotifShape::ring);
  CHECK(spec.motifs[1].intensity_lo == 150);
  CHECK(spec.motifs[1].size_hi == 7);
  CHECK(spec.motifs[1].y_lo == doctest::Approx(0.5));
  CHECK_THROWS_AS(SyntheticSpec::from_config(FlatConfig::parse("prevalance = 0.1\n")), ConfigError);
  CHECK_THROWS_AS(SyntheticSpec::from_config(FlatConfig::parse("motif.9.shape = disc\n")), ConfigError);
  CHECK_THROWS_AS(SyntheticSpec::from_config(FlatConfig::parse("motif.0.shape = blob\n")), ConfigError);
}

TEST_CASE("subsample_every_k") {
  SUBCASE("k = 1 is the identity") {
    const auto r = make_records({0, 0, 1, 1, 1, 2});
    CHECK(subsample_every_k(r, 1) == r);
  }
  SUBCASE("25 records per sequence, k = 10") {
    std::vector<std::int64_t> seqs;
    for (int s = 0; s < 2; ++s)
      for (int i = 0; i < 25; ++i) seqs.push_back(s);
    const auto r = make_records(seqs);
    const auto out = subsample_every_k(r, 10);
    REQUIRE(out.size() == 6);
    const std::vector<std::size_t> expect{0, 10, 20, 25, 35, 45};
    for (std::size_t i = 0; i < 6; ++i) CHECK(out[i] == r[expect[i]]);
  }
  SUBCASE("k beyond every sequence keeps the first of each") {
    const auto r = make_records({3, 3, 3, 7, 7, 3, 9});
    const auto out = subsample_every_k(r, 100);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == r[0]);
    CHECK(out[1] == r[3]);
    CHECK(out[2] == r[6]);
  }
  SUBCASE("composition") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::int64_t> seqs(std::uniform_int_distribution<int>(1, 120)(rng));
      for (auto& s : seqs) s = std::uniform_int_distribution<int>(0, 4)(rng);
      const auto r = make_records(seqs);
      const std::size_t a = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
      const std::size_t b = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
      CHECK(subsample_every_k(subsample_every_k(r, a), b) == subsample_every_k(r, a * b));
    }
  }
  CHECK_THROWS_AS(subsample_every_k({}, 0), ConfigError);
}

TEST_CASE("manifest parsing") {
  const auto& table = ClassTable::sewer_ml();
  const fs::path dir = scratch("manifest");
  SUBCASE("empty file") {
    write_text(dir / "m.tsv", "");
    CHECK(load_manifest(dir / "m.tsv", table).empty());
  }
  SUBCASE("codes set exactly their bits, duplicates idempotent") {
    write_text(dir / "m.tsv", "a.png\t4\tRB;FS\nb.png\t4\tOB;OB\nc.png\t5\t\nd.png\t6\n");
    const auto r = load_manifest(dir / "m.tsv", table);
    REQUIRE(r.size() == 4);
    std::vector<std::uint8_t> want(17, 0);
    want[*table.index_of("RB")] = want[*table.index_of("FS")] = 1;
    CHECK(r[0].labels == want);
    CHECK(r[0].sequence_id == 4);
    std::vector<std::uint8_t> ob(17, 0);
    ob[*table.index_of("OB")] = 1;
    CHECK(r[1].labels == ob);
    CHECK(r[2].normal());
    CHECK(r[3].normal());
  }
  SUBCASE("malformed line reports its number") {
    write_text(dir / "m.tsv", "a.png\t1\tRB\nbroken line without tabs\n");
    try {
      load_manifest(dir / "m.tsv", table);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    write_text(dir / "m.tsv", "a.png\tx1\tRB\n");
    CHECK_THROWS_AS(load_manifest(dir / "m.tsv", table), ParseError);
  }
  SUBCASE("unknown code") {
    write_text(dir / "m.tsv", "a.png\t1\tRB;ZZ\n");
    CHECK_THROWS_AS(load_manifest(dir / "m.tsv", table), SchemaError);
  }
  SUBCASE("round trip") {
    std::mt19937_64 rng(3);
    std::vector<SampleRecord> recs;
    for (int i = 0; i < 40; ++i) {
      SampleRecord r{"img/" + std::to_string(i) + ".png", std::vector<std::uint8_t>(17), i / 7};
      for (auto& b : r.labels) b = std::bernoulli_distribution(0.2)(rng);
      recs.push_back(r);
    }
    write_manifest(dir / "rt.tsv", recs, table);
    CHECK(load_manifest(dir / "rt.tsv", table) == recs);
  }
  CHECK_THROWS_AS(load_manifest(dir / "missing.tsv", table), IoError);
}

TEST_CASE("written dataset loads back with boxes and tensors") {
  auto spec = SyntheticSpec::desk_default();
  spec.min_class_count = 1;
  const auto samples = generate_dataset(spec, 12);
  const fs::path dir = scratch("roundtrip");
  write_dataset(dir, samples, spec.table);
  const auto recs = load_manifest(dir / "manifest.tsv", spec.table);
  REQUIRE(recs.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) CHECK(recs[i] == samples[i].record);
  const auto boxes = load_boxes(dir / "boxes.tsv", spec.table);
  for (const auto& s : samples) {
    if (s.boxes.empty()) {
      CHECK(boxes.count(s.record.path) == 0);
    } else {
      CHECK(boxes.at(s.record.path) == s.boxes);
    }
  }
  const auto ex = load_examples(recs, dir, 32);
  REQUIRE(ex.size() == 12);
  CHECK(ex[0].image.shape() == Shape{3, 32, 32});
  CHECK(read_png(dir / recs[0].path) == samples[0].image);
}
