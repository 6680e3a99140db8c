#include "pipa/geom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pipa {

Rect rect_intersection(const Rect& a, const Rect& b) {
  return Rect{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
}

double rect_iou(const Rect& a, const Rect& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("rect_iou: degenerate rectangle");
  const Rect i = rect_intersection(a, b);
  if (!i.valid()) return 0.0;
  const double inter = static_cast<double>(i.area());
  const double uni = static_cast<double>(a.area() + b.area()) - inter;
  return inter / uni;
}

void validate_patch_pair(const PatchPairSpec& spec, double iou_lo, double iou_hi) {
  const auto fail = [](const std::string& msg) { throw std::invalid_argument("PatchPairSpec: " + msg); };
  if (spec.stride <= 0) fail("stride must be positive");
  if (spec.resize_ratio < 0.5 || spec.resize_ratio > 2.0) fail("resize ratio outside [0.5, 2]");
  if (!spec.rect1.valid() || !spec.rect2.valid()) fail("degenerate crop rectangle");
  if (spec.rect1.width() != spec.rect2.width() || spec.rect1.height() != spec.rect2.height())
    fail("crops must be the same size");
  for (const Rect* r : {&spec.rect1, &spec.rect2}) {
    if (r->x0 < 0 || r->y0 < 0 || r->x1 > spec.resized_w || r->y1 > spec.resized_h)
      fail("crop exceeds the resized image bounds");
    if (r->x0 % spec.stride || r->y0 % spec.stride || r->width() % spec.stride || r->height() % spec.stride)
      fail("crop offsets and extents must be multiples of the stride");
  }
  if (spec.overlap != rect_intersection(spec.rect1, spec.rect2)) fail("overlap is not the crop intersection");
  if (!spec.overlap.valid()) fail("crops do not overlap");
  const double iou = rect_iou(spec.rect1, spec.rect2);
  if (iou < iou_lo - 1e-12 || iou > iou_hi + 1e-12)
    fail("crop IoU " + std::to_string(iou) + " outside [" + std::to_string(iou_lo) + ", " +
         std::to_string(iou_hi) + "]");
}

PatchPairSpec sample_patch_pair(int img_w, int img_h, int crop, double iou_lo, double iou_hi,
                                int stride, Rng& rng) {
  if (stride <= 0 || crop <= 0 || crop % stride != 0)
    throw std::invalid_argument("sample_patch_pair: crop must be a positive multiple of the stride");
  if (iou_lo < 0.1 || iou_hi > 1.0 || iou_lo > iou_hi)
    throw std::invalid_argument("sample_patch_pair: IoU range must lie within [0.1, 1]");
  const int min_side = std::min(img_w, img_h);
  if (min_side <= 0) throw std::invalid_argument("sample_patch_pair: empty image");
  double ratio_lo = 0.5;
  if (static_cast<double>(crop) / min_side > ratio_lo) ratio_lo = static_cast<double>(crop) / min_side;
  if (ratio_lo > 2.0)
    throw std::invalid_argument("sample_patch_pair: crop " + std::to_string(crop) +
                                " cannot fit a " + std::to_string(img_w) + "x" + std::to_string(img_h) +
                                " image at any ratio in [0.5, 2]");

  PatchPairSpec spec;
  spec.stride = stride;
  spec.resize_ratio = rng.uniform(ratio_lo, 2.0);
  spec.resized_w = std::max(crop, static_cast<int>(std::lround(img_w * spec.resize_ratio)));
  spec.resized_h = std::max(crop, static_cast<int>(std::lround(img_h * spec.resize_ratio)));

  const int nx = (spec.resized_w - crop) / stride + 1;  // stride-aligned offset choices
  const int ny = (spec.resized_h - crop) / stride + 1;
  for (int trial = 0; trial < 1000; ++trial) {
    const int x1 = stride * rng.uniform_int(nx);
    const int y1 = stride * rng.uniform_int(ny);
    const int x2 = stride * rng.uniform_int(nx);
    const int y2 = stride * rng.uniform_int(ny);
    spec.rect1 = Rect{x1, y1, x1 + crop, y1 + crop};
    spec.rect2 = Rect{x2, y2, x2 + crop, y2 + crop};
    const double iou = rect_iou(spec.rect1, spec.rect2);
    if (iou >= iou_lo && iou <= iou_hi) {
      spec.overlap = rect_intersection(spec.rect1, spec.rect2);
      validate_patch_pair(spec, iou_lo, iou_hi);
      return spec;
    }
  }
  throw std::runtime_error("sample_patch_pair: 1000 rejections without a crop pair in IoU [" +
                           std::to_string(iou_lo) + ", " + std::to_string(iou_hi) +
                           "]; the image is too small for this range");
}

Correspondence overlap_correspondence(const PatchPairSpec& spec) {
  validate_patch_pair(spec);
  const int s = spec.stride;
  Correspondence corr;
  corr.grid1_w = spec.rect1.width() / s;
  corr.grid1_h = spec.rect1.height() / s;
  corr.grid2_w = spec.rect2.width() / s;
  corr.grid2_h = spec.rect2.height() / s;
  const int ow = spec.overlap.width() / s;
  const int oh = spec.overlap.height() / s;
  const int off1x = (spec.overlap.x0 - spec.rect1.x0) / s;
  const int off1y = (spec.overlap.y0 - spec.rect1.y0) / s;
  const int off2x = (spec.overlap.x0 - spec.rect2.x0) / s;
  const int off2y = (spec.overlap.y0 - spec.rect2.y0) / s;
  corr.pairs.reserve(static_cast<size_t>(ow) * oh);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const int i1 = (off1y + oy) * corr.grid1_w + (off1x + ox);
      const int i2 = (off2y + oy) * corr.grid2_w + (off2x + ox);
      corr.pairs.emplace_back(i1, i2);
    }
  }
  return corr;
}

}  // namespace pipa
