#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tabuq/errors.hpp"
#include "tabuq/table_model.hpp"

namespace tabuq {

enum class Direction { horizontal, vertical };

struct Edge {
  int a = 0;  // a < b
  int b = 0;
  Direction direction = Direction::horizontal;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Undirected cell-adjacency graph. Edges are stored once with a < b.
class AdjacencyGraph {
 public:
  AdjacencyGraph() = default;
  AdjacencyGraph(std::vector<int> nodes, std::vector<Edge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    std::sort(nodes_.begin(), nodes_.end());
    std::sort(edges_.begin(), edges_.end());
    for (int n : nodes_) degree_[n] = 0;
    for (const auto& e : edges_) {
      ++degree_[e.a];
      ++degree_[e.b];
    }
  }

  const std::vector<int>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  std::size_t degree(int cell_id) const {
    auto it = degree_.find(cell_id);
    if (it == degree_.end()) throw NotFound("no node " + std::to_string(cell_id) + " in graph");
    return it->second;
  }

  bool has_edge(int a, int b) const {
    if (a > b) std::swap(a, b);
    return std::any_of(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.a == a && e.b == b; });
  }

 private:
  std::vector<int> nodes_;
  std::vector<Edge> edges_;
  std::map<int, std::size_t> degree_;
};

inline bool ranges_intersect(int a0, int a1, int b0, int b1) noexcept { return a0 <= b1 && b0 <= a1; }

/// Two cells are adjacent when one's last column (row) is directly followed by
/// the other's first and their row (column) ranges intersect. A pair adjacent
/// both ways cannot occur for grid-disjoint cells.
inline AdjacencyGraph build_adjacency(const std::vector<Cell>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].grid.valid()) {
      throw ValidationError("cell " + std::to_string(cells[i].id) + " has an invalid grid range");
    }
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      if (cells[i].grid.overlaps(cells[j].grid)) {
        throw ValidationError("cells " + std::to_string(cells[i].id) + " and " + std::to_string(cells[j].id) +
                              " overlap in the grid");
      }
    }
  }
  std::vector<int> nodes;
  std::set<int> seen;
  for (const auto& c : cells) {
    if (!seen.insert(c.id).second) throw ValidationError("duplicate cell id " + std::to_string(c.id));
    nodes.push_back(c.id);
  }

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (i == j) continue;
      const GridCoord& a = cells[i].grid;
      const GridCoord& b = cells[j].grid;
      const int lo = std::min(cells[i].id, cells[j].id);
      const int hi = std::max(cells[i].id, cells[j].id);
      if (a.end_col + 1 == b.start_col && ranges_intersect(a.start_row, a.end_row, b.start_row, b.end_row)) {
        edges.push_back({lo, hi, Direction::horizontal});
      }
      if (a.end_row + 1 == b.start_row && ranges_intersect(a.start_col, a.end_col, b.start_col, b.end_col)) {
        edges.push_back({lo, hi, Direction::vertical});
      }
    }
  }
  return AdjacencyGraph(std::move(nodes), std::move(edges));
}

inline std::size_t degree(const AdjacencyGraph& g, int cell_id) { return g.degree(cell_id); }

inline double mean_degree(const AdjacencyGraph& g) {
  if (g.nodes().empty()) throw InvalidInput("mean_degree of an empty graph");
  return 2.0 * static_cast<double>(g.edges().size()) / static_cast<double>(g.nodes().size());
}

/// Edge list, one "id_a id_b direction" line per edge, sorted.
inline std::string edge_list(const AdjacencyGraph& g) {
  std::string out;
  for (const auto& e : g.edges()) {
    out += std::to_string(e.a) + " " + std::to_string(e.b) + " " +
           (e.direction == Direction::horizontal ? "left-right" : "top-bottom") + "\n";
  }
  return out;
}

}  // namespace tabuq
