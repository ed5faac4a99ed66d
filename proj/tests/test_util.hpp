#pragma once

#include <random>
#include <vector>

#include "tabuq/geometry.hpp"
#include "tabuq/table_model.hpp"

namespace tabuq::testing {

/// Random valid box with corners in [0, extent].
inline BBox random_box(std::mt19937_64& rng, double extent = 100.0, double min_size = 0.5) {
  std::uniform_real_distribution<double> u(0.0, extent);
  for (;;) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    if (b - a >= min_size && d - c >= min_size) return BBox(a, c, b, d);
  }
}

/// Regular rows x cols grid of cells, each w x h with `gap` between them.
inline std::vector<Cell> grid_cells(int rows, int cols, double w = 50, double h = 20, double gap = 10,
                                    double origin = 0) {
  std::vector<Cell> cells;
  int id = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double x = origin + c * (w + gap), y = origin + r * (h + gap);
      cells.push_back(Cell{id++, BBox(x, y, x + w, y + h), GridCoord{r, r, c, c}, std::nullopt});
    }
  return cells;
}

inline TablePage page_of(std::vector<Cell> cells, int width, int height, std::string id = "t") {
  TablePage p;
  p.table_id = std::move(id);
  p.width = width;
  p.height = height;
  p.cells = std::move(cells);
  return p;
}

}  // namespace tabuq::testing
