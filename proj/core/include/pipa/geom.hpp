#pragma once

#include <utility>
#include <vector>

#include "pipa/rng.hpp"

namespace pipa {

/// Half-open pixel rectangle [x0,x1) x [y0,y1).
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  bool valid() const { return x0 < x1 && y0 < y1; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

Rect rect_intersection(const Rect& a, const Rect& b);
double rect_iou(const Rect& a, const Rect& b);

/// Two equal-size crops of a resized image together with their overlap.
/// All offsets and extents are multiples of `stride`, so features of the two
/// crops align exactly on the overlap without interpolation.
struct PatchPairSpec {
  double resize_ratio = 1.0;
  int resized_w = 0, resized_h = 0;
  Rect rect1, rect2;
  Rect overlap;
  int stride = 1;
};

/// Throws when any of the PatchPairSpec invariants is violated.
void validate_patch_pair(const PatchPairSpec& spec, double iou_lo = 0.1, double iou_hi = 1.0);

/// Draws a resize ratio from [0.5, 2] (clamped below so the crop fits), then
/// rejection-samples two stride-aligned crop offsets until their IoU lands in
/// [iou_lo, iou_hi]. Gives up after 1000 rejections.
PatchPairSpec sample_patch_pair(int img_w, int img_h, int crop, double iou_lo, double iou_hi,
                                int stride, Rng& rng);

/// Same-source-location index pairs between the two crops' feature grids.
struct Correspondence {
  int grid1_w = 0, grid1_h = 0;
  int grid2_w = 0, grid2_h = 0;
  std::vector<std::pair<int, int>> pairs;  // (flat index in grid1, flat index in grid2)
};

Correspondence overlap_correspondence(const PatchPairSpec& spec);

}  // namespace pipa
