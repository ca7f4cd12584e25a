#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "maq2l/class_table.hpp"
#include "maq2l/config.hpp"
#include "maq2l/image.hpp"
#include "maq2l/tensor.hpp"

namespace maq2l {

struct SampleRecord {
  std::string path;  // as written in the manifest (relative to it)
  std::vector<std::uint8_t> labels;
  std::int64_t sequence_id = 0;

  bool normal() const;
  bool operator==(const SampleRecord&) const = default;
};

// Pixel box [x0, x1) × [y0, y1) of one class instance.
struct Box {
  std::size_t cls = 0;
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  std::size_t area() const { return (x1 - x0) * (y1 - y0); }
  bool operator==(const Box&) const = default;
};

enum class MotifShape { square, disc, ring, hbar, vbar, cross, diagonal, checker };

MotifShape parse_motif_shape(const std::string& name);
std::string motif_shape_name(MotifShape shape);

struct Motif {
  MotifShape shape = MotifShape::square;
  std::uint8_t intensity_lo = 200, intensity_hi = 255;
  std::size_t size_lo = 8, size_hi = 10;  // side of the bounding square, pixels
  // Allowed range of the top-left corner as fractions of the free span.
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
};

struct SyntheticSpec {
  std::size_t image_size = 32;
  ClassTable table;
  std::vector<double> prevalence;
  // Symmetric, zero diagonal. Entries are latent correlations of a Gaussian
  // copula over the labels, so marginals stay at `prevalence`.
  std::vector<std::vector<double>> cooccurrence;
  std::vector<Motif> motifs;
  std::uint64_t seed = 1;
  std::size_t sequence_length = 10;
  std::size_t min_class_count = 0;  // post-stratified floor per class
  double dark_zone_rate = 0.3;      // class-free dark disc at the image centre
  double noise = 6.0;               // pixel noise std

  std::size_t num_classes() const { return table.size(); }
  void validate() const;

  // 8 classes from the head of the Sewer-ML table, geometric prevalences
  // 0.5·0.55^n, a few positive co-occurrence pairs.
  static SyntheticSpec desk_default(std::size_t num_classes = 8, std::size_t image_size = 32);
  // Defaults overridden by the keys of `cfg`; unknown keys throw ConfigError.
  static SyntheticSpec from_config(const FlatConfig& cfg);
  // Key reference for --help.
  static std::vector<std::array<std::string, 2>> key_help();
};

struct GeneratedSample {
  SampleRecord record;
  Image image;
  std::vector<Box> boxes;
};

// Deterministic under spec.seed; per-sample streams are derived from
// (seed, index), so results do not depend on the worker count.
std::vector<GeneratedSample> generate_dataset(const SyntheticSpec& spec, std::size_t count);

// images/NNNNN.png, manifest.tsv and boxes.tsv under dir.
void write_dataset(const std::filesystem::path& dir, const std::vector<GeneratedSample>& samples,
                   const ClassTable& table);

// path \t sequence_id \t CODE;CODE (empty = Normal), one record per line.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path, const ClassTable& table);
void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records,
                    const ClassTable& table);

// path \t CODE \t x0 \t y0 \t x1 \t y1
std::map<std::string, std::vector<Box>> load_boxes(const std::filesystem::path& path, const ClassTable& table);

// Keeps positions 0, k, 2k, ... within each sequence_id, preserving order.
std::vector<SampleRecord> subsample_every_k(const std::vector<SampleRecord>& records, std::size_t k);

struct Example {
  Tensor image;  // [3 × s × s]
  std::vector<double> labels;
  std::string path;
};

// Reads every record's PNG (relative to base_dir) and resizes to size.
std::vector<Example> load_examples(const std::vector<SampleRecord>& records, const std::filesystem::path& base_dir,
                                   std::size_t size, std::size_t channels = 3);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace maq2l
