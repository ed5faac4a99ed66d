#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabuq/errors.hpp"
#include "tabuq/image.hpp"
#include "tabuq/table_model.hpp"

namespace tabuq {

struct LineDetectParams {
  int binarize_threshold = 128;   // dark means value < threshold
  double min_run_fraction = 0.3;  // of image width (rows) or height (columns)
  int max_thickness = 5;
  int min_attached_run = 10;  // shorter thin runs count when they touch a long line
  std::uint8_t background_value = 255;

  void validate() const {
    if (binarize_threshold <= 0 || binarize_threshold >= 255) {
      throw InvalidArgument("binarize_threshold must lie in (0,255)");
    }
    if (!(min_run_fraction > 0.0 && min_run_fraction <= 1.0)) {
      throw InvalidArgument("min_run_fraction must lie in (0,1]");
    }
    if (max_thickness < 1) throw InvalidArgument("max_thickness must be >= 1");
    if (min_attached_run < 1) throw InvalidArgument("min_attached_run must be >= 1");
  }
};

/// Ruling-line positions plus the extent the lines are drawn across.
struct GridSpec {
  std::vector<double> row_separators;
  std::vector<double> col_separators;
  int line_width = 1;
  std::uint8_t line_value = 0;
  // Table extent; lines span [x_min,x_max) horizontally and [y_min,y_max)
  // vertically. Unset means the whole image.
  std::optional<double> x_min, x_max, y_min, y_max;
};

enum class LineMode { horizontal, vertical, both };
enum class MaskScope { whole_image, per_cell };

namespace detail {

// Marks runs of `dark` of length >= min_len along the primary axis, then keeps
// only the parts whose extent along the secondary axis is <= max_thickness.
// `horizontal` selects rows as the primary axis.
inline BitMask detect_oriented(const GrayImage& img, const LineDetectParams& p, bool horizontal, int min_len) {
  const int w = img.width(), h = img.height();
  const int primary_len = horizontal ? w : h;
  const int secondary_len = horizontal ? h : w;
  auto dark = [&](int along, int across) {
    const int x = horizontal ? along : across;
    const int y = horizontal ? across : along;
    return img.at(x, y) < p.binarize_threshold;
  };

  BitMask runs(w, h);
  auto set = [&](BitMask& m, int along, int across) {
    if (horizontal)
      m.set(along, across);
    else
      m.set(across, along);
  };
  auto test = [&](const BitMask& m, int along, int across) {
    return horizontal ? m.test(along, across) : m.test(across, along);
  };

  for (int across = 0; across < secondary_len; ++across) {
    int along = 0;
    while (along < primary_len) {
      if (!dark(along, across)) {
        ++along;
        continue;
      }
      const int start = along;
      while (along < primary_len && dark(along, across)) ++along;
      if (along - start >= min_len) {
        for (int k = start; k < along; ++k) set(runs, k, across);
      }
    }
  }

  // Band thickness is measured per position along the line.
  BitMask out(w, h);
  for (int along = 0; along < primary_len; ++along) {
    int across = 0;
    while (across < secondary_len) {
      if (!test(runs, along, across)) {
        ++across;
        continue;
      }
      const int start = across;
      while (across < secondary_len && test(runs, along, across)) ++across;
      if (across - start <= p.max_thickness) {
        for (int k = start; k < across; ++k) set(out, along, k);
      }
    }
  }
  return out;
}

inline int min_run_length(const LineDetectParams& p, int primary_len) {
  return std::max(1, static_cast<int>(std::ceil(p.min_run_fraction * primary_len - 1e-9)));
}

inline void add_mask(BitMask& into, const BitMask& from) {
  for (int y = 0; y < into.height(); ++y)
    for (int x = 0; x < into.width(); ++x)
      if (from.test(x, y)) into.set(x, y);
}

inline int clamp_int(double v, int lo, int hi) {
  return static_cast<int>(std::clamp(v, static_cast<double>(lo), static_cast<double>(hi)));
}

}  // namespace detail

/// Run-length ruling-line detector: long thin dark runs in either direction,
/// grown through 8-connected thin runs of at least `min_attached_run` pixels
/// (segments left between spanning cells).
inline BitMask detect_ruling_lines(const GrayImage& img, const LineDetectParams& p = {}) {
  p.validate();
  const int w = img.width(), h = img.height();
  BitMask mask = detail::detect_oriented(img, p, true, detail::min_run_length(p, w));
  detail::add_mask(mask, detail::detect_oriented(img, p, false, detail::min_run_length(p, h)));

  BitMask thin = detail::detect_oriented(img, p, true, p.min_attached_run);
  detail::add_mask(thin, detail::detect_oriented(img, p, false, p.min_attached_run));
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.test(x, y)) stack.emplace_back(x, y);
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        if (thin.test(nx, ny) && !mask.test(nx, ny)) {
          mask.set(nx, ny);
          stack.emplace_back(nx, ny);
        }
      }
  }
  return mask;
}

inline GrayImage remove_lines(const GrayImage& img, const LineDetectParams& p = {}) {
  const BitMask mask = detect_ruling_lines(img, p);
  GrayImage out = img;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (mask.test(x, y)) out.at(x, y) = p.background_value;
  return out;
}

inline void validate_grid(const GridSpec& g, int width, int height) {
  if (g.line_width < 1) throw ValidationError("line_width must be >= 1");
  auto check = [](const std::vector<double>& seps, int limit, const char* what) {
    for (std::size_t i = 0; i < seps.size(); ++i) {
      if (!(seps[i] >= 0.0 && seps[i] < limit)) {
        throw ValidationError(std::string(what) + " separator outside image");
      }
      if (i > 0 && !(seps[i - 1] < seps[i])) {
        throw ValidationError(std::string(what) + " separators not strictly increasing");
      }
    }
  };
  check(g.row_separators, height, "row");
  check(g.col_separators, width, "column");
}

/// Draws horizontal and/or vertical ruling lines at the grid separators. Each
/// line is a band of `line_width` pixels starting at floor(separator).
inline GrayImage add_lines(const GrayImage& img, const GridSpec& grid, LineMode mode) {
  validate_grid(grid, img.width(), img.height());
  GrayImage out = img;
  const int x_lo = detail::clamp_int(std::floor(grid.x_min.value_or(0.0)), 0, img.width());
  const int x_hi = detail::clamp_int(std::ceil(grid.x_max.value_or(img.width())), 0, img.width());
  const int y_lo = detail::clamp_int(std::floor(grid.y_min.value_or(0.0)), 0, img.height());
  const int y_hi = detail::clamp_int(std::ceil(grid.y_max.value_or(img.height())), 0, img.height());

  if (mode == LineMode::horizontal || mode == LineMode::both) {
    for (double sep : grid.row_separators) {
      const int top = static_cast<int>(std::floor(sep));
      for (int y = top; y < std::min(top + grid.line_width, img.height()); ++y)
        for (int x = x_lo; x < x_hi; ++x) out.at(x, y) = grid.line_value;
    }
  }
  if (mode == LineMode::vertical || mode == LineMode::both) {
    for (double sep : grid.col_separators) {
      const int left = static_cast<int>(std::floor(sep));
      for (int x = left; x < std::min(left + grid.line_width, img.width()); ++x)
        for (int y = y_lo; y < y_hi; ++y) out.at(x, y) = grid.line_value;
    }
  }
  return out;
}

namespace detail {

// Separators along one axis. `lo`/`hi` pick the cell's low and high edge,
// `first`/`last` its grid range on that axis.
template <class Lo, class Hi, class First, class Last>
std::vector<double> separators_along(const std::vector<Cell>& cells, Lo lo, Hi hi, First first,
                                     Last last, const char* axis) {
  int n_bands = 0;
  for (const auto& c : cells) n_bands = std::max(n_bands, last(c) + 1);
  std::vector<double> seps;
  for (int r = 0; r + 1 < n_bands; ++r) {
    std::optional<double> upper, lower;
    for (const auto& c : cells) {
      if (last(c) == r) upper = std::max(upper.value_or(hi(c)), hi(c));
      if (first(c) == r + 1) lower = std::min(lower.value_or(lo(c)), lo(c));
    }
    if (!upper || !lower) continue;  // boundary fully covered by spanning cells
    if (*lower < *upper) {
      throw ValidationError(std::string("inconsistent grid: ") + axis + " bands " +
                            std::to_string(r) + " and " + std::to_string(r + 1) + " overlap");
    }
    seps.push_back((*upper + *lower) / 2.0);
  }
  return seps;
}

}  // namespace detail

/// Separators at the midpoint of each gap between consecutive row (column)
/// bands, using only cells that end at / start after the boundary.
inline GridSpec grid_from_cells(const TablePage& page) {
  GridSpec g;
  g.row_separators = detail::separators_along(
      page.cells, [](const Cell& c) { return c.bbox.y1(); }, [](const Cell& c) { return c.bbox.y2(); },
      [](const Cell& c) { return c.grid.start_row; }, [](const Cell& c) { return c.grid.end_row; },
      "row");
  g.col_separators = detail::separators_along(
      page.cells, [](const Cell& c) { return c.bbox.x1(); }, [](const Cell& c) { return c.bbox.x2(); },
      [](const Cell& c) { return c.grid.start_col; }, [](const Cell& c) { return c.grid.end_col; },
      "column");
  if (!page.cells.empty()) {
    double x1 = page.cells[0].bbox.x1(), y1 = page.cells[0].bbox.y1();
    double x2 = page.cells[0].bbox.x2(), y2 = page.cells[0].bbox.y2();
    for (const auto& c : page.cells) {
      x1 = std::min(x1, c.bbox.x1());
      y1 = std::min(y1, c.bbox.y1());
      x2 = std::max(x2, c.bbox.x2());
      y2 = std::max(y2, c.bbox.y2());
    }
    g.x_min = x1;
    g.x_max = x2;
    g.y_min = y1;
    g.y_max = y2;
  }
  return g;
}

/// Pixel index range [lo,hi) covered by a continuous interval, clipped.
inline std::pair<int, int> pixel_span(double a, double b, int limit) {
  return {detail::clamp_int(std::floor(a), 0, limit), detail::clamp_int(std::ceil(b), 0, limit)};
}

/// Multiplies in-scope pixels by `factor`, rounding and clamping at 255.
inline GrayImage mask_intensity(const GrayImage& img, double factor, MaskScope scope = MaskScope::whole_image,
                                std::optional<std::span<const Cell>> cells = std::nullopt) {
  if (!(factor >= 1.0) || !std::isfinite(factor)) throw InvalidArgument("mask factor must be >= 1");
  if (scope == MaskScope::per_cell && !cells) {
    throw InvalidArgument("per_cell masking requires cells");
  }
  std::uint8_t lut[256];
  for (int v = 0; v < 256; ++v) {
    lut[v] = static_cast<std::uint8_t>(std::min(255.0, std::round(v * factor)));
  }
  GrayImage out = img;
  if (scope == MaskScope::whole_image) {
    for (auto& v : out.pixels()) v = lut[v];
    return out;
  }
  BitMask in_scope(img.width(), img.height());
  for (const auto& c : *cells) {
    const auto [x0, x1] = pixel_span(c.bbox.x1(), c.bbox.x2(), img.width());
    const auto [y0, y1] = pixel_span(c.bbox.y1(), c.bbox.y2(), img.height());
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) in_scope.set(x, y);
  }
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (in_scope.test(x, y)) out.at(x, y) = lut[img.at(x, y)];
  return out;
}

// ---------------------------------------------------------------------------
// Named augmentations

enum class Augmentation { none, nlt, hlt, vlt, hvlt, mask2, mask3 };

inline Augmentation parse_augmentation(std::string_view name) {
  static const std::map<std::string_view, Augmentation> kNames = {
      {"none", Augmentation::none},   {"original", Augmentation::none}, {"nlt", Augmentation::nlt},
      {"hlt", Augmentation::hlt},     {"vlt", Augmentation::vlt},       {"hvlt", Augmentation::hvlt},
      {"mask2", Augmentation::mask2}, {"mask3", Augmentation::mask3}};
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "hlt+vlt") return Augmentation::hvlt;
  auto it = kNames.find(lower);
  if (it == kNames.end()) throw InvalidArgument("unknown augmentation '" + std::string(name) + "'");
  return it->second;
}

inline const char* augmentation_name(Augmentation a) {
  switch (a) {
    case Augmentation::none: return "none";
    case Augmentation::nlt: return "nlt";
    case Augmentation::hlt: return "hlt";
    case Augmentation::vlt: return "vlt";
    case Augmentation::hvlt: return "hvlt";
    case Augmentation::mask2: return "mask2";
    case Augmentation::mask3: return "mask3";
  }
  return "none";
}

/// Applies one named augmentation. Line addition draws at separators derived
/// from the page's ground-truth cells.
inline GrayImage augment(const GrayImage& img, const TablePage& page, Augmentation aug,
                         MaskScope mask_scope = MaskScope::whole_image, const LineDetectParams& lp = {}) {
  switch (aug) {
    case Augmentation::none: return img;
    case Augmentation::nlt: return remove_lines(img, lp);
    case Augmentation::hlt: return add_lines(img, grid_from_cells(page), LineMode::horizontal);
    case Augmentation::vlt: return add_lines(img, grid_from_cells(page), LineMode::vertical);
    case Augmentation::hvlt: return add_lines(img, grid_from_cells(page), LineMode::both);
    case Augmentation::mask2: return mask_intensity(img, 2.0, mask_scope, page.cells);
    case Augmentation::mask3: return mask_intensity(img, 3.0, mask_scope, page.cells);
  }
  return img;
}

}  // namespace tabuq
