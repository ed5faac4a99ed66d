#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>

#include "tabuq/errors.hpp"

namespace tabuq {

/// Axis-aligned rectangle in continuous pixel coordinates (origin top-left,
/// y grows downward). Width and height are strictly positive; construction
/// of a degenerate box throws InvalidGeometry.
class BBox {
 public:
  BBox(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2))) {
      throw InvalidGeometry("bbox has non-finite coordinate: " + to_string());
    }
    if (x1 < 0.0 || y1 < 0.0) {
      throw InvalidGeometry("bbox has negative coordinate: " + to_string());
    }
    if (!(x1 < x2) || !(y1 < y2)) {
      throw InvalidGeometry("bbox is degenerate: " + to_string());
    }
  }

  double x1() const noexcept { return x1_; }
  double y1() const noexcept { return y1_; }
  double x2() const noexcept { return x2_; }
  double y2() const noexcept { return y2_; }
  double width() const noexcept { return x2_ - x1_; }
  double height() const noexcept { return y2_ - y1_; }

  friend bool operator==(const BBox&, const BBox&) = default;

  std::string to_string() const {
    return "(" + fmt(x1_) + "," + fmt(y1_) + "," + fmt(x2_) + "," + fmt(y2_) + ")";
  }

 private:
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }

  double x1_, y1_, x2_, y2_;
};

inline std::ostream& operator<<(std::ostream& os, const BBox& b) { return os << b.to_string(); }

inline double area(const BBox& b) noexcept { return b.width() * b.height(); }

inline double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline double iou(const BBox& a, const BBox& b) noexcept {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return inter / (area(a) + area(b) - inter);
}

inline constexpr double kContainEps = 1e-9;

/// True when `inner` lies within `outer`, each edge allowed to overshoot by eps.
inline bool contains(const BBox& outer, const BBox& inner, double eps = kContainEps) noexcept {
  return outer.x1() - eps <= inner.x1() && inner.x2() <= outer.x2() + eps &&
         outer.y1() - eps <= inner.y1() && inner.y2() <= outer.y2() + eps;
}

/// IoU estimated by counting lattice points (cell centres at spacing `step`)
/// over the union's bounding rectangle. Membership is separable for
/// rectangles, so points are counted per axis and multiplied; no closed-form
/// area arithmetic is involved. Used as an independent check of iou().
inline double raster_iou_oracle(const BBox& a, const BBox& b, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw InvalidArgument("raster_iou_oracle: step must be positive");
  }
  struct AxisCounts {
    std::int64_t in_a = 0, in_b = 0, in_both = 0;
  };
  auto count_axis = [step](double lo, double hi, double a_lo, double a_hi, double b_lo,
                           double b_hi) {
    AxisCounts c;
    const auto n = static_cast<std::int64_t>(std::ceil((hi - lo) / step));
    for (std::int64_t i = 0; i < n; ++i) {
      const double p = lo + (static_cast<double>(i) + 0.5) * step;
      const bool ina = a_lo <= p && p < a_hi;
      const bool inb = b_lo <= p && p < b_hi;
      c.in_a += ina;
      c.in_b += inb;
      c.in_both += ina && inb;
    }
    return c;
  };
  const double ux1 = std::min(a.x1(), b.x1()), ux2 = std::max(a.x2(), b.x2());
  const double uy1 = std::min(a.y1(), b.y1()), uy2 = std::max(a.y2(), b.y2());
  const AxisCounts cx = count_axis(ux1, ux2, a.x1(), a.x2(), b.x1(), b.x2());
  const AxisCounts cy = count_axis(uy1, uy2, a.y1(), a.y2(), b.y1(), b.y2());
  const std::int64_t n_a = cx.in_a * cy.in_a;
  const std::int64_t n_b = cx.in_b * cy.in_b;
  const std::int64_t n_both = cx.in_both * cy.in_both;
  const std::int64_t n_union = n_a + n_b - n_both;
  if (n_union == 0) return 0.0;
  return static_cast<double>(n_both) / static_cast<double>(n_union);
}

}  // namespace tabuq
