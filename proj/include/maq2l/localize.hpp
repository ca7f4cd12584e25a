#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "maq2l/backbone.hpp"
#include "maq2l/data.hpp"
#include "maq2l/image.hpp"

namespace maq2l {

// One class's CAM at image resolution.
struct Heatmap {
  std::size_t cls = 0;
  std::string code;
  std::size_t width = 0, height = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

// Column `cls` of the attention mask, reshaped to H×W and bilinearly
// upsampled to out_h × out_w. Throws IndexError for an invalid class.
Heatmap class_heatmap(const Tensor& features, const CamHead& cam, std::size_t cls, std::size_t out_h,
                      std::size_t out_w, const std::string& code = {});

struct Point {
  int x = 0, y = 0;
  bool operator==(const Point&) const = default;
};

struct DefectRegion {
  std::size_t cls = 0;
  std::string code;
  std::vector<Point> contour;  // outer boundary pixels, closed (last joins first)
  std::size_t area = 0;        // pixel count
  double peak = 0.0;
  Box bbox;
};

// Type-7 (linear interpolation) quantile of the values.
double quantile(std::vector<double> values, double q);

// 8-connected components of a binary raster. Returns per-pixel labels,
// 0 = background, components numbered 1.. in raster order of their first
// pixel.
std::vector<int> label_components(const std::vector<std::uint8_t>& mask, std::size_t width, std::size_t height,
                                  int* count = nullptr);

// Moore-neighbour trace of the outer boundary of component `label`, starting
// at its first pixel in raster order.
std::vector<Point> trace_contour(const std::vector<int>& labels, std::size_t width, std::size_t height, int label);

// Pixels strictly above the per-map quantile threshold, grouped into
// 8-connected components of at least min_area pixels, sorted by peak
// activation descending.
std::vector<DefectRegion> extract_regions(const Heatmap& hm, double threshold_quantile, std::size_t min_area);

double iou(const Box& a, const Box& b);

// Jet-coloured heat blended at `alpha` over the image, contours in red.
Image render_overlay(const Image& image, const std::vector<DefectRegion>& regions, const Heatmap& hm,
                     double alpha = 0.4);

// CODE \t area \t peak \t x,y;x,y;...
std::string region_record(const DefectRegion& region);

}  // namespace maq2l
