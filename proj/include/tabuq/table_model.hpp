#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "tabuq/errors.hpp"
#include "tabuq/geometry.hpp"
#include "tabuq/image.hpp"

namespace tabuq {

/// Inclusive row/column span of a cell.
struct GridCoord {
  int start_row = 0;
  int end_row = 0;
  int start_col = 0;
  int end_col = 0;

  bool valid() const noexcept {
    return start_row >= 0 && start_col >= 0 && start_row <= end_row && start_col <= end_col;
  }
  bool overlaps(const GridCoord& o) const noexcept {
    return start_row <= o.end_row && o.start_row <= end_row && start_col <= o.end_col &&
           o.start_col <= end_col;
  }
  int row_span() const noexcept { return end_row - start_row + 1; }
  int col_span() const noexcept { return end_col - start_col + 1; }

  friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

struct Cell {
  int id = 0;
  BBox bbox;
  GridCoord grid;
  std::optional<std::string> content;

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct TablePage {
  std::string table_id;
  std::optional<std::string> image_path;
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;
  // Populated only by the synthetic generator; not serialized to JSON.
  std::optional<BitMask> line_mask;
  std::optional<BitMask> text_mask;

  const Cell& cell(int id) const {
    for (const auto& c : cells)
      if (c.id == id) return c;
    throw NotFound("table " + table_id + " has no cell " + std::to_string(id));
  }

  friend bool operator==(const TablePage&, const TablePage&) = default;
};

/// One model's boxes for one table.
struct PredictionSet {
  int model_index = 0;
  std::string model_label;
  std::vector<BBox> boxes;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

/// All model outputs for one table, as carried by the predictions file.
struct TablePredictions {
  std::string table_id;
  std::vector<PredictionSet> predictions;

  friend bool operator==(const TablePredictions&, const TablePredictions&) = default;
};

struct Dataset {
  std::string split_label;
  std::vector<TablePage> pages;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate(const TablePage& page) {
  if (page.width <= 0 || page.height <= 0) {
    throw ValidationError("table " + page.table_id + ": nonpositive image dimensions");
  }
  std::set<int> ids;
  std::vector<int> dup_ids, out_of_bounds, bad_grid;
  for (const auto& c : page.cells) {
    if (!ids.insert(c.id).second) dup_ids.push_back(c.id);
    if (c.bbox.x2() > page.width || c.bbox.y2() > page.height) out_of_bounds.push_back(c.id);
    if (!c.grid.valid()) bad_grid.push_back(c.id);
  }
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  const std::string where = "table " + page.table_id + ": ";
  if (!dup_ids.empty()) throw ValidationError(where + "duplicate cell ids " + list(dup_ids));
  if (!out_of_bounds.empty()) {
    throw ValidationError(where + "cell bbox outside image bounds, cell ids " + list(out_of_bounds));
  }
  if (!bad_grid.empty()) throw ValidationError(where + "invalid grid range, cell ids " + list(bad_grid));

  std::vector<int> overlapping;
  for (std::size_t i = 0; i < page.cells.size(); ++i) {
    for (std::size_t j = i + 1; j < page.cells.size(); ++j) {
      if (page.cells[i].grid.overlaps(page.cells[j].grid)) {
        overlapping.push_back(page.cells[i].id);
        overlapping.push_back(page.cells[j].id);
      }
    }
  }
  if (!overlapping.empty()) {
    throw ValidationError(where + "cells share grid positions, cell ids " + list(overlapping));
  }
  auto check_mask = [&](const std::optional<BitMask>& m, const char* name) {
    if (m && (m->width() != page.width || m->height() != page.height)) {
      throw ValidationError(where + name + " dimensions differ from image");
    }
  };
  check_mask(page.line_mask, "line_mask");
  check_mask(page.text_mask, "text_mask");
}

inline void validate(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& p : ds.pages) {
    if (!ids.insert(p.table_id).second) throw ValidationError("duplicate table_id " + p.table_id);
    validate(p);
  }
}

inline void validate(const TablePredictions& tp) {
  std::set<int> seen;
  for (const auto& ps : tp.predictions) {
    if (ps.model_index < 0) {
      throw ValidationError("table " + tp.table_id + ": negative model_index");
    }
    if (!seen.insert(ps.model_index).second) {
      throw ValidationError("table " + tp.table_id + ": duplicate model_index " +
                            std::to_string(ps.model_index));
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace json_io {

using nlohmann::json;

inline json box_to_json(const BBox& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

inline const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + "." + key, "missing field");
  return *it;
}

inline std::string get_string(const json& j, const char* key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_string()) throw ParseError(path + "." + key, "expected string");
  return v.get<std::string>();
}

inline std::optional<std::string> get_opt_string(const json& j, const char* key,
                                                 const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected object");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(path + "." + key, "expected string or null");
  return it->get<std::string>();
}

inline long long get_int(const json& j, const char* key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number_integer()) throw ParseError(path + "." + key, "expected integer");
  return v.get<long long>();
}

inline double get_number(const json& j, const char* key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number()) throw ParseError(path + "." + key, "expected number");
  return v.get<double>();
}

inline const json& get_array(const json& j, const char* key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_array()) throw ParseError(path + "." + key, "expected array");
  return v;
}

inline BBox box_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) throw ParseError(path, "expected [x1,y1,x2,y2]");
  double v[4];
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw ParseError(path, "bbox coordinates must be numbers");
    v[i] = j[i].get<double>();
  }
  try {
    return BBox(v[0], v[1], v[2], v[3]);
  } catch (const InvalidGeometry& e) {
    throw ParseError(path, e.what());
  }
}

inline json page_to_json(const TablePage& p) {
  json cells = json::array();
  for (const auto& c : p.cells) {
    cells.push_back({{"id", c.id},
                     {"bbox", box_to_json(c.bbox)},
                     {"grid", json::array({c.grid.start_row, c.grid.end_row, c.grid.start_col,
                                           c.grid.end_col})},
                     {"content", c.content ? json(*c.content) : json(nullptr)}});
  }
  return {{"table_id", p.table_id},
          {"image_path", p.image_path ? json(*p.image_path) : json(nullptr)},
          {"width", p.width},
          {"height", p.height},
          {"cells", std::move(cells)}};
}

inline TablePage page_from_json(const json& j, const std::string& path) {
  TablePage p;
  p.table_id = get_string(j, "table_id", path);
  p.image_path = get_opt_string(j, "image_path", path);
  p.width = static_cast<int>(get_int(j, "width", path));
  p.height = static_cast<int>(get_int(j, "height", path));
  const json& cells = get_array(j, "cells", path);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string cp = path + ".cells[" + std::to_string(i) + "]";
    const json& cj = cells[i];
    const json& grid = get_array(cj, "grid", cp);
    if (grid.size() != 4) throw ParseError(cp + ".grid", "expected [start_row,end_row,start_col,end_col]");
    GridCoord g;
    int* dst[4] = {&g.start_row, &g.end_row, &g.start_col, &g.end_col};
    for (int k = 0; k < 4; ++k) {
      if (!grid[k].is_number_integer()) throw ParseError(cp + ".grid", "expected integers");
      *dst[k] = grid[k].get<int>();
    }
    p.cells.push_back(Cell{static_cast<int>(get_int(cj, "id", cp)),
                           box_from_json(field(cj, "bbox", cp), cp + ".bbox"), g,
                           get_opt_string(cj, "content", cp)});
  }
  return p;
}

inline json dataset_to_json(const Dataset& ds) {
  json pages = json::array();
  for (const auto& p : ds.pages) pages.push_back(page_to_json(p));
  return {{"split_label", ds.split_label}, {"pages", std::move(pages)}};
}

inline Dataset dataset_from_json(const json& j) {
  Dataset ds;
  ds.split_label = get_string(j, "split_label", "$");
  const json& pages = get_array(j, "pages", "$");
  for (std::size_t i = 0; i < pages.size(); ++i) {
    ds.pages.push_back(page_from_json(pages[i], "$.pages[" + std::to_string(i) + "]"));
  }
  return ds;
}

inline json predictions_to_json(const TablePredictions& tp) {
  json preds = json::array();
  for (const auto& ps : tp.predictions) {
    json boxes = json::array();
    for (const auto& b : ps.boxes) boxes.push_back(box_to_json(b));
    preds.push_back(
        {{"model_index", ps.model_index}, {"model_label", ps.model_label}, {"boxes", std::move(boxes)}});
  }
  return {{"table_id", tp.table_id}, {"predictions", std::move(preds)}};
}

inline TablePredictions predictions_from_json(const json& j, const std::string& path) {
  TablePredictions tp;
  tp.table_id = get_string(j, "table_id", path);
  const json& preds = get_array(j, "predictions", path);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::string pp = path + ".predictions[" + std::to_string(i) + "]";
    PredictionSet ps;
    ps.model_index = static_cast<int>(get_int(preds[i], "model_index", pp));
    ps.model_label = get_string(preds[i], "model_label", pp);
    const json& boxes = get_array(preds[i], "boxes", pp);
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      ps.boxes.push_back(box_from_json(boxes[k], pp + ".boxes[" + std::to_string(k) + "]"));
    }
    tp.predictions.push_back(std::move(ps));
  }
  return tp;
}

}  // namespace json_io

/// Reads a whole file, throwing IoError if it cannot be opened.
inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
}

/// Canonical serialization: sorted keys, two-space indent, shortest
/// round-trip float representation, trailing newline.
inline std::string canonical_dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline Dataset load_dataset(const std::filesystem::path& path) {
  Dataset ds = json_io::dataset_from_json(read_json_file(path));
  validate(ds);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_text_file(path, canonical_dump(json_io::dataset_to_json(ds)));
}

/// A predictions file holds either one table object or an array of them.
inline std::vector<TablePredictions> load_predictions(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  std::vector<TablePredictions> out;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      out.push_back(json_io::predictions_from_json(j[i], "$[" + std::to_string(i) + "]"));
    }
  } else {
    out.push_back(json_io::predictions_from_json(j, "$"));
  }
  for (const auto& tp : out) validate(tp);
  return out;
}

inline void save_predictions(const std::vector<TablePredictions>& tables,
                             const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& tp : tables) arr.push_back(json_io::predictions_to_json(tp));
  write_text_file(path, canonical_dump(arr));
}

// ---------------------------------------------------------------------------
// ICDAR cTDaR-style XML

namespace detail {

inline BBox bbox_from_points(const std::string& points, const std::string& where) {
  std::istringstream ss(points);
  std::string tok;
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  int n = 0;
  while (ss >> tok) {
    const auto comma = tok.find(',');
    if (comma == std::string::npos || tok.find(',', comma + 1) != std::string::npos) {
      throw ParseError(where, "malformed point '" + tok + "'");
    }
    double x = 0, y = 0;
    try {
      std::size_t used = 0;
      const std::string xs = tok.substr(0, comma), ys = tok.substr(comma + 1);
      x = std::stod(xs, &used);
      if (used != xs.size()) throw std::invalid_argument(xs);
      y = std::stod(ys, &used);
      if (used != ys.size()) throw std::invalid_argument(ys);
    } catch (const std::exception&) {
      throw ParseError(where, "malformed point '" + tok + "'");
    }
    if (!std::isfinite(x) || !std::isfinite(y)) throw ParseError(where, "non-finite point");
    if (n == 0) {
      min_x = max_x = x;
      min_y = max_y = y;
    } else {
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
    ++n;
  }
  if (n == 0) throw ParseError(where, "Coords has no points");
  try {
    return BBox(min_x, min_y, max_x, max_y);
  } catch (const InvalidGeometry& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

inline int grid_attr(const boost::property_tree::ptree& cell, const char* name,
                     const std::string& where) {
  auto v = cell.get_optional<std::string>(std::string("<xmlattr>.") + name);
  if (!v) throw ParseError(where, std::string("missing attribute ") + name);
  try {
    std::size_t used = 0;
    const int r = std::stoi(*v, &used);
    if (used != v->size() || r < 0) throw std::invalid_argument(*v);
    return r;
  } catch (const std::exception&) {
    throw ParseError(where, std::string("bad attribute ") + name + "='" + *v + "'");
  }
}

}  // namespace detail

/// Imports the `table_index`-th <table> of a cTDaR-style XML file. Cell
/// quadrilaterals collapse to their axis-aligned min/max box; ids follow
/// document order from 0. Page extent is the ceiling of the largest
/// coordinate seen, since the XML carries no image size.
inline TablePage import_icdar_xml(const std::filesystem::path& path, std::size_t table_index = 0) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(path.string(), e.what());
  }

  // Tables live under <document>, but accept a bare <table> root as well.
  std::vector<const pt::ptree*> tables;
  for (const auto& [name, node] : tree) {
    if (name == "table") tables.push_back(&node);
    for (const auto& [child_name, child] : node) {
      if (child_name == "table") tables.push_back(&child);
    }
  }
  if (table_index >= tables.size()) {
    throw ParseError(path.string(), "no table element at index " + std::to_string(table_index));
  }
  const pt::ptree& table = *tables[table_index];

  TablePage page;
  page.table_id = path.stem().string();
  if (table_index > 0) page.table_id += "_" + std::to_string(table_index);
  double max_x = 0, max_y = 0;
  if (auto tc = table.get_optional<std::string>("Coords.<xmlattr>.points")) {
    const BBox tb = detail::bbox_from_points(*tc, path.string() + ": table Coords");
    max_x = tb.x2();
    max_y = tb.y2();
  }
  int next_id = 0;
  for (const auto& [name, node] : table) {
    if (name != "cell") continue;
    const std::string where = path.string() + ": cell " + std::to_string(next_id);
    GridCoord g{detail::grid_attr(node, "start-row", where), detail::grid_attr(node, "end-row", where),
                detail::grid_attr(node, "start-col", where), detail::grid_attr(node, "end-col", where)};
    if (!g.valid()) throw ValidationError(where + ": inverted grid range");
    auto points = node.get_optional<std::string>("Coords.<xmlattr>.points");
    if (!points) throw ParseError(where, "missing Coords points");
    const BBox b = detail::bbox_from_points(*points, where);
    std::optional<std::string> content;
    if (auto c = node.get_optional<std::string>("content")) content = *c;
    page.cells.push_back(Cell{next_id++, b, g, content});
    max_x = std::max(max_x, b.x2());
    max_y = std::max(max_y, b.y2());
  }
  page.width = std::max(1, static_cast<int>(std::ceil(max_x)));
  page.height = std::max(1, static_cast<int>(std::ceil(max_y)));
  validate(page);
  return page;
}

}  // namespace tabuq
