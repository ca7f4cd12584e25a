#include "maq2l/localize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "maq2l/error.hpp"

namespace maq2l {

Heatmap class_heatmap(const Tensor& features, const CamHead& cam, std::size_t cls, std::size_t out_h,
                      std::size_t out_w, const std::string& code) {
  if (cls >= cam.classes()) {
    throw IndexError("class index " + std::to_string(cls) + " out of range for " + std::to_string(cam.classes()) +
                     " classes");
  }
  if (features.rank() != 3) throw DimensionError("class_heatmap expects C×H×W features, got " + shape_str(features.shape()));
  NoGradGuard guard;
  const std::size_t h = features.dim(1), w = features.dim(2);
  const AttentionMask a1 = cam.attention_mask(features);
  const auto v = a1.values.data();
  const std::size_t n = a1.classes();
  std::vector<double> plane(h * w);
  for (std::size_t p = 0; p < h * w; ++p) plane[p] = v[p * n + cls];
  Heatmap hm;
  hm.cls = cls;
  hm.code = code;
  hm.width = out_w;
  hm.height = out_h;
  hm.values = resize_bilinear(plane, h, w, out_h, out_w);
  return hm;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DimensionError("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

// Clockwise from west, y pointing down.
constexpr int kDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

int direction_of(int dx, int dy) {
  for (int d = 0; d < 8; ++d)
    if (kDx[d] == dx && kDy[d] == dy) return d;
  return -1;
}

std::array<std::uint8_t, 3> jet(double t) {
  auto ch = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); };
  return {ch(1.5 - std::abs(4.0 * t - 3.0)), ch(1.5 - std::abs(4.0 * t - 2.0)), ch(1.5 - std::abs(4.0 * t - 1.0))};
}

}  // namespace

std::vector<int> label_components(const std::vector<std::uint8_t>& mask, std::size_t width, std::size_t height,
                                  int* count) {
  if (mask.size() != width * height) throw DimensionError("label_components: mask size does not match dimensions");
  std::vector<int> labels(mask.size(), 0);
  std::vector<int> parent{0};
  const auto w = static_cast<int>(width), h = static_cast<int>(height);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask[static_cast<std::size_t>(y * w + x)]) continue;
      int current = 0;
      // Already-visited neighbours: W, NW, N, NE.
      for (int d = 0; d < 4; ++d) {
        const int nx = x + kDx[d], ny = y + kDy[d];
        if (nx < 0 || ny < 0 || nx >= w) continue;
        const int l = labels[static_cast<std::size_t>(ny * w + nx)];
        if (!l) continue;
        if (!current) {
          current = find_root(parent, l);
        } else {
          const int a = find_root(parent, current), b = find_root(parent, l);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
          current = std::min(a, b);
        }
      }
      if (!current) {
        current = static_cast<int>(parent.size());
        parent.push_back(current);
      }
      labels[static_cast<std::size_t>(y * w + x)] = current;
    }
  std::vector<int> remap(parent.size(), 0);
  int next = 0;
  for (auto& l : labels) {
    if (!l) continue;
    const int root = find_root(parent, l);
    if (!remap[static_cast<std::size_t>(root)]) remap[static_cast<std::size_t>(root)] = ++next;
    l = remap[static_cast<std::size_t>(root)];
  }
  if (count) *count = next;
  return labels;
}

std::vector<Point> trace_contour(const std::vector<int>& labels, std::size_t width, std::size_t height, int label) {
  const auto w = static_cast<int>(width), h = static_cast<int>(height);
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && labels[static_cast<std::size_t>(y * w + x)] == label;
  };
  Point start{-1, -1};
  for (int i = 0; i < w * h && start.x < 0; ++i)
    if (labels[static_cast<std::size_t>(i)] == label) start = {i % w, i / w};
  if (start.x < 0) return {};

  std::vector<Point> contour{start};
  Point cur = start;
  int back = 0;  // west of the first raster pixel is always outside
  int first_move = -1;
  for (std::size_t guard = 0; guard < 4 * width * height + 8; ++guard) {
    int move = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back + k) % 8;
      if (inside(cur.x + kDx[d], cur.y + kDy[d])) {
        move = d;
        break;
      }
    }
    if (move < 0) return contour;  // isolated pixel
    if (cur == start && move == first_move) {
      contour.pop_back();
      return contour;
    }
    if (first_move < 0) first_move = move;
    const int prev = (move + 7) % 8;
    const Point probe{cur.x + kDx[prev], cur.y + kDy[prev]};
    const Point next{cur.x + kDx[move], cur.y + kDy[move]};
    back = direction_of(probe.x - next.x, probe.y - next.y);
    cur = next;
    contour.push_back(cur);
  }
  throw ContractError("contour tracing did not terminate");
}

std::vector<DefectRegion> extract_regions(const Heatmap& hm, double threshold_quantile, std::size_t min_area) {
  if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0))
    throw ConfigError("threshold quantile must lie in (0, 1)");
  if (hm.values.size() != hm.width * hm.height) throw DimensionError("heatmap size does not match its dimensions");
  if (hm.values.empty()) return {};
  const double thr = quantile(hm.values, threshold_quantile);
  std::vector<std::uint8_t> mask(hm.values.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = hm.values[i] > thr;
  int count = 0;
  const auto labels = label_components(mask, hm.width, hm.height, &count);

  std::vector<DefectRegion> regions(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < regions.size(); ++i) {
    regions[i].cls = hm.cls;
    regions[i].code = hm.code;
    regions[i].peak = -std::numeric_limits<double>::infinity();
    regions[i].bbox = {hm.cls, hm.width, hm.height, 0, 0};
  }
  for (std::size_t y = 0; y < hm.height; ++y)
    for (std::size_t x = 0; x < hm.width; ++x) {
      const int l = labels[y * hm.width + x];
      if (!l) continue;
      DefectRegion& r = regions[static_cast<std::size_t>(l - 1)];
      ++r.area;
      r.peak = std::max(r.peak, hm.at(x, y));
      r.bbox.x0 = std::min(r.bbox.x0, x);
      r.bbox.y0 = std::min(r.bbox.y0, y);
      r.bbox.x1 = std::max(r.bbox.x1, x + 1);
      r.bbox.y1 = std::max(r.bbox.y1, y + 1);
    }
  std::vector<DefectRegion> kept;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].area < min_area) continue;
    regions[i].contour = trace_contour(labels, hm.width, hm.height, static_cast<int>(i + 1));
    kept.push_back(std::move(regions[i]));
  }
  std::stable_sort(kept.begin(), kept.end(), [](const DefectRegion& a, const DefectRegion& b) {
    if (a.peak != b.peak) return a.peak > b.peak;
    return a.area > b.area;
  });
  return kept;
}

double iou(const Box& a, const Box& b) {
  const std::size_t ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const std::size_t ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const std::size_t inter = (ix1 > ix0 && iy1 > iy0) ? (ix1 - ix0) * (iy1 - iy0) : 0;
  const std::size_t uni = a.area() + b.area() - inter;
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

Image render_overlay(const Image& image, const std::vector<DefectRegion>& regions, const Heatmap& hm, double alpha) {
  if (image.width != hm.width || image.height != hm.height) {
    throw DimensionError("overlay: image " + std::to_string(image.width) + "×" + std::to_string(image.height) +
                         " does not match heatmap " + std::to_string(hm.width) + "×" + std::to_string(hm.height));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("overlay alpha must lie in [0, 1]");
  Image out = image.to_rgb();
  const auto [lo, hi] = std::minmax_element(hm.values.begin(), hm.values.end());
  const double span = hm.values.empty() ? 0.0 : *hi - *lo;
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) {
      const double t = span > 0.0 ? (hm.at(x, y) - *lo) / span : 0.0;
      const auto colour = jet(t);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1.0 - alpha) * out.at(x, y, c) + alpha * colour[c];
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  for (const auto& r : regions)
    for (const Point& p : r.contour) {
      if (p.x < 0 || p.y < 0 || static_cast<std::size_t>(p.x) >= out.width || static_cast<std::size_t>(p.y) >= out.height)
        continue;
      const auto x = static_cast<std::size_t>(p.x), y = static_cast<std::size_t>(p.y);
      out.at(x, y, 0) = 255;
      out.at(x, y, 1) = 0;
      out.at(x, y, 2) = 0;
    }
  return out;
}

std::string region_record(const DefectRegion& region) {
  std::ostringstream os;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", region.peak);
  os << region.code << '\t' << region.area << '\t' << buf << '\t';
  for (std::size_t i = 0; i < region.contour.size(); ++i)
    os << (i ? ";" : "") << region.contour[i].x << ',' << region.contour[i].y;
  return os.str();
}

}  // namespace maq2l
