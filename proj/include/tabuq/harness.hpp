#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "tabuq/augment.hpp"
#include "tabuq/complexity.hpp"
#include "tabuq/ensemble.hpp"
#include "tabuq/errors.hpp"
#include "tabuq/evaluation.hpp"
#include "tabuq/image.hpp"
#include "tabuq/parallel.hpp"
#include "tabuq/table_model.hpp"

namespace tabuq {

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stream key for one (seed, model, table, cell) tuple; independent of the
/// order in which tables or models are processed.
inline std::uint64_t stream_key(std::uint64_t seed, int model_index, std::string_view table_id, int cell_id) noexcept {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(model_index)));
  k = splitmix64(k ^ fnv1a(table_id));
  return splitmix64(k ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(cell_id)));
}

inline double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// ---------------------------------------------------------------------------
// Synthetic tables

struct SynthParams {
  int rows = 5;
  int cols = 5;
  double span_prob = 0.0;  // chance a cell absorbs its right or bottom neighbour
  int cell_w = 80;
  int cell_h = 30;
  int gap = 8;
  int margin = 12;
  bool draw_lines = true;
  double glyph_density = 0.3;
  std::uint8_t ink_value = 72;
  int line_width = 1;

  void validate() const {
    if (rows < 1 || cols < 1) throw InvalidArgument("rows and cols must be positive");
    if (cell_w < 1 || cell_h < 1) throw InvalidArgument("cell dimensions must be positive");
    if (gap < 0 || margin < 0 || line_width < 1) throw InvalidArgument("gap/margin/line_width out of range");
    if (!(span_prob >= 0.0 && span_prob <= 1.0)) throw InvalidArgument("span_prob must lie in [0,1]");
    if (!(glyph_density >= 0.0 && glyph_density <= 1.0)) throw InvalidArgument("glyph_density must lie in [0,1]");
    if (draw_lines && (gap / 2 + line_width > margin || line_width > std::max(1, gap))) {
      throw InvalidArgument("ruling lines do not fit in the gap/margin");
    }
    const long long w = 2LL * margin + 1LL * cols * cell_w + (cols - 1LL) * gap;
    const long long h = 2LL * margin + 1LL * rows * cell_h + (rows - 1LL) * gap;
    if (w > 20000 || h > 20000) throw InvalidArgument("cell extents exceed the maximum image size");
  }
  int image_width() const noexcept { return 2 * margin + cols * cell_w + (cols - 1) * gap; }
  int image_height() const noexcept { return 2 * margin + rows * cell_h + (rows - 1) * gap; }
};

struct SyntheticTable {
  TablePage page;  // carries line_mask and text_mask
  GrayImage image;
};

namespace detail {

inline void fill_rect(GrayImage& img, BitMask& mask, int x0, int y0, int x1, int y1, std::uint8_t v) {
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(img.width(), x1);
  y1 = std::min(img.height(), y1);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      img.at(x, y) = v;
      mask.set(x, y);
    }
}

// Word-like dark blocks laid out in text lines inside [x0,x1)x[y0,y1) until
// the requested ink coverage is reached or the box is full. Blocks are taller
// than the default line detector's max thickness.
inline void draw_glyphs(GrayImage& img, BitMask& text, std::mt19937_64& rng, int x0, int y0, int x1, int y1,
                        double density, std::uint8_t ink) {
  constexpr int kPad = 3, kLineH = 8, kLeading = 4, kSpace = 4;
  const int ix0 = x0 + kPad, iy0 = y0 + kPad, ix1 = x1 - kPad, iy1 = y1 - kPad;
  if (ix1 <= ix0 || iy1 - iy0 < kLineH || density <= 0.0) return;
  const double target = density * (x1 - x0) * (y1 - y0);
  double inked = 0.0;
  for (int ty = iy0; ty + kLineH <= iy1 && inked < target; ty += kLineH + kLeading) {
    int x = ix0;
    while (x < ix1 && inked < target) {
      const int word = 6 + static_cast<int>(uniform01(rng) * 19.0);
      const int w = std::min(word, ix1 - x);
      if (w < 3) break;
      fill_rect(img, text, x, ty, x + w, ty + kLineH, ink);
      inked += static_cast<double>(w) * kLineH;
      x += w + kSpace;
    }
  }
}

}  // namespace detail

/// Renders a rows x cols table with optional seeded span merges, ruling lines
/// on every unspanned boundary plus an outer frame, and pseudo-glyph text.
inline SyntheticTable generate_table(const SynthParams& p, std::uint64_t seed, const std::string& table_id = "t0000") {
  p.validate();
  std::mt19937_64 rng(splitmix64(seed));

  std::vector<std::vector<int>> owner(p.rows, std::vector<int>(p.cols, -1));
  std::vector<GridCoord> grids;
  for (int r = 0; r < p.rows; ++r) {
    for (int c = 0; c < p.cols; ++c) {
      if (owner[r][c] >= 0) continue;
      GridCoord g{r, r, c, c};
      if (uniform01(rng) < p.span_prob) {
        const bool right = uniform01(rng) < 0.5;
        if (right && c + 1 < p.cols && owner[r][c + 1] < 0)
          g.end_col = c + 1;
        else if (r + 1 < p.rows && owner[r + 1][c] < 0)
          g.end_row = r + 1;
        else if (c + 1 < p.cols && owner[r][c + 1] < 0)
          g.end_col = c + 1;
      }
      const int id = static_cast<int>(grids.size());
      for (int rr = g.start_row; rr <= g.end_row; ++rr)
        for (int cc = g.start_col; cc <= g.end_col; ++cc) owner[rr][cc] = id;
      grids.push_back(g);
    }
  }

  const int W = p.image_width(), H = p.image_height();
  const int pitch_x = p.cell_w + p.gap, pitch_y = p.cell_h + p.gap;
  SyntheticTable out;
  out.image = GrayImage(W, H, 255);
  BitMask lines(W, H), text(W, H);

  TablePage& page = out.page;
  page.table_id = table_id;
  page.width = W;
  page.height = H;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    const GridCoord& g = grids[i];
    const int x1 = p.margin + g.start_col * pitch_x, x2 = p.margin + g.end_col * pitch_x + p.cell_w;
    const int y1 = p.margin + g.start_row * pitch_y, y2 = p.margin + g.end_row * pitch_y + p.cell_h;
    page.cells.push_back(Cell{static_cast<int>(i), BBox(x1, y1, x2, y2), g, std::nullopt});
  }

  if (p.draw_lines) {
    // Boundary k sits half a gap beyond the preceding band; 0 and n are the frame.
    auto bx = [&](int k) { return p.margin + k * pitch_x - p.gap / 2; };
    auto by = [&](int k) { return p.margin + k * pitch_y - p.gap / 2; };
    const int lw = p.line_width;
    for (int k = 0; k <= p.cols; ++k) {
      for (int r = 0; r < p.rows; ++r) {
        const bool border = k == 0 || k == p.cols;
        if (!border && owner[r][k - 1] == owner[r][k]) continue;
        detail::fill_rect(out.image, lines, bx(k), by(r), bx(k) + lw, by(r + 1) + lw, 0);
      }
    }
    for (int k = 0; k <= p.rows; ++k) {
      for (int c = 0; c < p.cols; ++c) {
        const bool border = k == 0 || k == p.rows;
        if (!border && owner[k - 1][c] == owner[k][c]) continue;
        detail::fill_rect(out.image, lines, bx(c), by(k), bx(c + 1) + lw, by(k) + lw, 0);
      }
    }
  }

  for (const auto& cell : page.cells) {
    detail::draw_glyphs(out.image, text, rng, static_cast<int>(cell.bbox.x1()), static_cast<int>(cell.bbox.y1()),
                        static_cast<int>(cell.bbox.x2()), static_cast<int>(cell.bbox.y2()), p.glyph_density,
                        p.ink_value);
  }
  page.line_mask = std::move(lines);
  page.text_mask = std::move(text);
  return out;
}

inline std::string table_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%04zu", i);
  return buf;
}

inline std::vector<SyntheticTable> generate_dataset(const SynthParams& p, std::size_t n, std::uint64_t seed,
                                                    std::size_t workers = 1) {
  return parallel_map(n, workers, [&](std::size_t i) {
    return generate_table(p, splitmix64(seed ^ splitmix64(i)), table_name(i));
  });
}

// ---------------------------------------------------------------------------
// Mock predictors

struct PredictorParams {
  double jitter_sigma = 0.0;      // px, per corner coordinate
  double p_drop_base = 0.0;
  double degree_drop_gain = 0.0;  // added drop probability per adjacency degree
  double intensity_gamma = 1.0;   // exponent on cell faintness (mean intensity / 255)
  double intensity_drop_gain = 0.0;    // drop probability added at full faintness
  double intensity_jitter_gain = 0.0;  // px of extra jitter at full faintness
  double p_spurious = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    auto prob = [](double v, const char* n) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(n) + " must lie in [0,1]");
    };
    prob(p_drop_base, "p_drop_base");
    prob(p_spurious, "p_spurious");
    if (!(jitter_sigma >= 0.0)) throw InvalidArgument("jitter_sigma must be >= 0");
    if (!(degree_drop_gain >= 0.0) || !(intensity_drop_gain >= 0.0) || !(intensity_jitter_gain >= 0.0)) {
      throw InvalidArgument("gains must be >= 0");
    }
    if (!(intensity_gamma >= 0.0)) throw InvalidArgument("intensity_gamma must be >= 0");
  }
};

/// One member of a predictor bank: the augmentation its input receives and
/// its error model.
struct ModelSpec {
  std::string label;
  Augmentation augmentation = Augmentation::none;
  PredictorParams params;
};

/// Mean pixel value over a box, scaled to [0,1].
inline double mean_intensity(const GrayImage& img, const BBox& b) {
  const auto [x0, x1] = pixel_span(b.x1(), b.x2(), img.width());
  const auto [y0, y1] = pixel_span(b.y1(), b.y2(), img.height());
  if (x1 <= x0 || y1 <= y0) return 1.0;
  double sum = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) sum += img.at(x, y);
  return sum / (255.0 * (x1 - x0) * (y1 - y0));
}

namespace detail {

inline BBox clamped_box(double x1, double y1, double x2, double y2, int W, int H) {
  auto fix = [](double& lo, double& hi, double limit) {
    lo = std::clamp(lo, 0.0, limit);
    hi = std::clamp(hi, 0.0, limit);
    if (hi < lo) std::swap(lo, hi);
    if (hi - lo < 1.0) {
      hi = std::min(limit, lo + 1.0);
      lo = std::max(0.0, hi - 1.0);
    }
  };
  fix(x1, x2, W);
  fix(y1, y2, H);
  return BBox(x1, y1, x2, y2);
}

}  // namespace detail

/// Simulated detector. Per ground-truth cell it drops the cell with
/// probability min(1, p_drop_base + degree_drop_gain*degree +
/// intensity_drop_gain*faint^gamma), otherwise emits the cell box with
/// Gaussian corner noise (sigma grows with faintness), and with probability
/// p_spurious adds a small box (at most a quarter of the emitted box's area)
/// inside the emitted box. Every cell draws from its own keyed stream.
inline PredictionSet mock_predict(const TablePage& page, const GrayImage& image, const PredictorParams& p,
                                  int model_index, std::string model_label = {}) {
  p.validate();
  if (image.width() != page.width || image.height() != page.height) {
    throw InvalidInput("table " + page.table_id + ": image dimensions do not match the page");
  }
  const AdjacencyGraph graph = build_adjacency(page.cells);
  PredictionSet out{model_index, std::move(model_label), {}};
  for (const auto& cell : page.cells) {
    std::mt19937_64 rng(stream_key(p.seed, model_index, page.table_id, cell.id));
    const double faint = mean_intensity(image, cell.bbox);
    const double faint_term = std::pow(faint, p.intensity_gamma);
    const double p_drop = std::min(1.0, p.p_drop_base + p.degree_drop_gain * static_cast<double>(graph.degree(cell.id)) +
                                            p.intensity_drop_gain * faint_term);
    if (uniform01(rng) < p_drop) continue;

    const double sigma = p.jitter_sigma + p.intensity_jitter_gain * faint_term;
    double c[4] = {cell.bbox.x1(), cell.bbox.y1(), cell.bbox.x2(), cell.bbox.y2()};
    if (sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, sigma);
      for (double& v : c) v += noise(rng);
    }
    const BBox box = detail::clamped_box(c[0], c[1], c[2], c[3], page.width, page.height);
    out.boxes.push_back(box);

    if (p.p_spurious > 0.0 && uniform01(rng) < p.p_spurious) {
      const double sw = box.width() * (0.2 + 0.3 * uniform01(rng));
      const double sh = box.height() * (0.2 + 0.3 * uniform01(rng));
      const double sx = box.x1() + (box.width() - sw) * uniform01(rng);
      const double sy = box.y1() + (box.height() - sh) * uniform01(rng);
      out.boxes.push_back(BBox(sx, sy, std::min(sx + sw, box.x2()), std::min(sy + sh, box.y2())));
    }
  }
  return out;
}

/// Runs every model of the bank on its own augmentation of `base`.
inline std::vector<PredictionSet> predict_bank(const TablePage& page, const GrayImage& base,
                                               const std::vector<ModelSpec>& bank) {
  std::vector<PredictionSet> sets;
  for (std::size_t m = 0; m < bank.size(); ++m) {
    const GrayImage img = augment(base, page, bank[m].augmentation);
    sets.push_back(mock_predict(page, img, bank[m].params, static_cast<int>(m), bank[m].label));
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Banks

inline const char* kDefaultLabels[] = {"original", "NLT", "HLT", "VLT", "HLT+VLT"};
inline const Augmentation kDefaultAugmentations[] = {Augmentation::none, Augmentation::nlt, Augmentation::hlt,
                                                     Augmentation::vlt, Augmentation::hvlt};

/// Five models mirroring the original/NLT/HLT/VLT/HLT+VLT line-up, with
/// jitter, structural and faintness-driven misses, and occasional spurious
/// boxes.
inline std::vector<ModelSpec> default_bank(std::uint64_t seed = 7) {
  std::vector<ModelSpec> bank;
  for (int m = 0; m < 5; ++m) {
    PredictorParams p;
    p.jitter_sigma = 1.5;
    p.p_drop_base = 0.04;
    p.degree_drop_gain = 0.03;
    p.intensity_gamma = 12.0;
    p.intensity_drop_gain = 0.15;
    p.intensity_jitter_gain = 24.0;
    p.p_spurious = 0.03;
    p.seed = splitmix64(seed + static_cast<std::uint64_t>(m));
    bank.push_back({kDefaultLabels[m], kDefaultAugmentations[m], p});
  }
  return bank;
}

inline std::vector<ModelSpec> uniform_bank(const PredictorParams& base, int m_plus_1, std::uint64_t seed) {
  std::vector<ModelSpec> bank;
  for (int m = 0; m < m_plus_1; ++m) {
    PredictorParams p = base;
    p.seed = splitmix64(seed + static_cast<std::uint64_t>(m));
    const bool named = m_plus_1 == 5;
    bank.push_back({named ? kDefaultLabels[m] : "model" + std::to_string(m),
                    named ? kDefaultAugmentations[m] : Augmentation::none, p});
  }
  return bank;
}

inline std::vector<ModelSpec> identity_bank(int m_plus_1 = 5) { return uniform_bank(PredictorParams{}, m_plus_1, 0); }

/// Bank config: one INI section per model, in model-index order.
///
///   [model0]
///   label = original
///   augmentation = none
///   jitter_sigma = 1.5
///   p_drop_base = 0.04
///   ...
inline std::vector<ModelSpec> parse_bank(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError("bank config", e.what());
  }
  static const std::set<std::string> kKeys = {"label",           "augmentation",        "jitter_sigma",
                                              "p_drop_base",     "degree_drop_gain",    "intensity_gamma",
                                              "intensity_drop_gain", "intensity_jitter_gain", "p_spurious",
                                              "seed"};
  std::vector<ModelSpec> bank;
  for (const auto& [section, node] : tree) {
    if (node.empty()) throw ParseError("bank config", "key '" + section + "' outside a section");
    for (const auto& [key, v] : node) {
      if (!kKeys.count(key)) throw ParseError("bank config [" + section + "]", "unknown key '" + key + "'");
    }
    ModelSpec m;
    // get(key, default) falls back silently on malformed values, so only
    // read keys that are present.
    auto read = [&](const char* key, auto& into) {
      if (node.count(key)) into = node.get<std::remove_reference_t<decltype(into)>>(key);
    };
    try {
      m.label = section;
      read("label", m.label);
      std::string aug = "none";
      read("augmentation", aug);
      m.augmentation = parse_augmentation(aug);
      PredictorParams& p = m.params;
      read("jitter_sigma", p.jitter_sigma);
      read("p_drop_base", p.p_drop_base);
      read("degree_drop_gain", p.degree_drop_gain);
      read("intensity_gamma", p.intensity_gamma);
      read("intensity_drop_gain", p.intensity_drop_gain);
      read("intensity_jitter_gain", p.intensity_jitter_gain);
      read("p_spurious", p.p_spurious);
      read("seed", p.seed);
    } catch (const pt::ptree_bad_data& e) {
      throw ParseError("bank config [" + section + "]", e.what());
    }
    m.params.validate();
    bank.push_back(std::move(m));
  }
  if (bank.empty()) throw ParseError("bank config", "no model sections");
  return bank;
}

inline std::string format_bank(const std::vector<ModelSpec>& bank) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t m = 0; m < bank.size(); ++m) {
    const auto& p = bank[m].params;
    os << "[model" << m << "]\n"
       << "label = " << bank[m].label << "\n"
       << "augmentation = " << augmentation_name(bank[m].augmentation) << "\n"
       << "jitter_sigma = " << p.jitter_sigma << "\n"
       << "p_drop_base = " << p.p_drop_base << "\n"
       << "degree_drop_gain = " << p.degree_drop_gain << "\n"
       << "intensity_gamma = " << p.intensity_gamma << "\n"
       << "intensity_drop_gain = " << p.intensity_drop_gain << "\n"
       << "intensity_jitter_gain = " << p.intensity_jitter_gain << "\n"
       << "p_spurious = " << p.p_spurious << "\n"
       << "seed = " << p.seed << "\n";
    if (m + 1 < bank.size()) os << "\n";
  }
  return os.str();
}

inline std::vector<ModelSpec> load_bank(const std::filesystem::path& path) { return parse_bank(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Dataset on disk

inline std::filesystem::path image_rel_path(const std::string& table_id) { return "images/" + table_id + ".png"; }

/// Writes dataset.json, images/<id>.png and masks/<id>_{lines,text}.png.
inline void write_synthetic_dataset(const std::vector<SyntheticTable>& tables, const std::string& split_label,
                                    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  Dataset ds{split_label, {}};
  for (const auto& t : tables) {
    TablePage page = t.page;
    page.image_path = image_rel_path(page.table_id).generic_string();
    write_png(t.image, dir / *page.image_path);
    if (page.line_mask) write_mask_png(*page.line_mask, dir / "masks" / (page.table_id + "_lines.png"));
    if (page.text_mask) write_mask_png(*page.text_mask, dir / "masks" / (page.table_id + "_text.png"));
    page.line_mask.reset();
    page.text_mask.reset();
    ds.pages.push_back(std::move(page));
  }
  save_dataset(ds, dir / "dataset.json");
}

/// Loads each page's image, resolving relative paths against `base_dir`.
inline std::vector<GrayImage> load_images(const Dataset& ds, const std::filesystem::path& base_dir,
                                          std::size_t workers = 1) {
  return parallel_map(ds.pages.size(), workers, [&](std::size_t i) {
    const TablePage& page = ds.pages[i];
    if (!page.image_path) throw InvalidInput("table " + page.table_id + " has no image_path");
    std::filesystem::path p = *page.image_path;
    if (p.is_relative()) p = base_dir / p;
    GrayImage img = read_png(p);
    if (img.width() != page.width || img.height() != page.height) {
      throw InvalidInput("table " + page.table_id + ": image size differs from the page dimensions");
    }
    return img;
  });
}

// ---------------------------------------------------------------------------
// End-to-end pipeline

struct PipelineOptions {
  std::size_t workers = 1;
  std::vector<double> mask_factors{1.0, 2.0, 3.0};
  MaskScope mask_scope = MaskScope::whole_image;
};

struct ReportBundle {
  std::vector<LabeledPRF> prf;  // one row per model, then "ensemble"
  std::vector<ConfidenceBucket> confidence;
  std::vector<MaskingCurve> masking;
  std::vector<DegreeRow> degree;
  std::vector<TablePredictions> predictions;
  std::vector<MergedTable> merged;
  std::size_t removed_small_cells = 0;
  int m_plus_1 = 0;
  double theta0 = 0.5;
};

namespace detail {

struct TableOutcome {
  TablePredictions predictions;
  MergedTable merged;
  std::vector<PRF> per_model;
  PRF ensemble_prf;
  ConfidenceTally confidence;
  DegreeTally degree;
  std::size_t removed = 0;
};

inline TableOutcome evaluate_table(const TablePage& page, const GrayImage& image, const std::vector<ModelSpec>& bank,
                                   const EnsembleConfig& cfg) {
  TableOutcome o;
  const auto sets = predict_bank(page, image, bank);
  o.predictions = {page.table_id, sets};
  EnsembleResult er = ensemble_detailed(sets, cfg);
  o.removed = er.removed.size();
  for (const auto& s : sets) o.per_model.push_back(prf(match_cells(s.boxes, page.cells, cfg.theta0), s.boxes.size(), page.cells.size()));
  const auto boxes = merged_boxes(er.cells);
  o.ensemble_prf = prf(match_cells(boxes, page.cells, cfg.theta0), boxes.size(), page.cells.size());
  o.confidence = confidence_tally(er.cells, page.cells, cfg.theta0, er.m_plus_1);
  o.degree = degree_tally(page, er.cells, cfg.theta0);
  o.merged = {page.table_id, er.m_plus_1, cfg.theta0, std::move(er.cells)};
  return o;
}

}  // namespace detail

/// Predict, ensemble and evaluate every table, then repeat the ensemble
/// evaluation on masked copies. Aggregation runs in table_id order, so the
/// worker count never changes the result.
inline ReportBundle run_pipeline(const Dataset& ds, const std::vector<GrayImage>& images,
                                 const std::vector<ModelSpec>& bank, const EnsembleConfig& cfg,
                                 const PipelineOptions& opt = {}) {
  cfg.validate();
  if (ds.pages.empty()) throw InvalidInput("pipeline needs at least one table");
  if (bank.empty()) throw InvalidInput("pipeline needs at least one predictor");
  if (images.size() != ds.pages.size()) throw InvalidInput("one image per table required");

  std::vector<std::size_t> order(ds.pages.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ds.pages[a].table_id < ds.pages[b].table_id; });

  const auto outcomes = parallel_map(order.size(), opt.workers, [&](std::size_t i) {
    return detail::evaluate_table(ds.pages[order[i]], images[order[i]], bank, cfg);
  });

  ReportBundle rb;
  rb.m_plus_1 = static_cast<int>(bank.size());
  rb.theta0 = cfg.theta0;
  ConfidenceTally conf(rb.m_plus_1);
  DegreeTally deg;
  std::vector<std::vector<PRF>> per_model(bank.size());
  std::vector<PRF> ens;
  for (const auto& o : outcomes) {
    for (std::size_t m = 0; m < bank.size(); ++m) per_model[m].push_back(o.per_model[m]);
    ens.push_back(o.ensemble_prf);
    conf.merge(o.confidence);
    deg.merge(o.degree);
    rb.removed_small_cells += o.removed;
    rb.predictions.push_back(o.predictions);
    rb.merged.push_back(o.merged);
  }
  for (std::size_t m = 0; m < bank.size(); ++m) rb.prf.push_back({bank[m].label, micro_average(per_model[m])});
  rb.prf.push_back({"ensemble", micro_average(ens)});
  rb.confidence = conf.buckets();
  rb.degree = deg.rows();

  std::vector<TablePage> pages;
  std::vector<GrayImage> ordered_images;
  for (std::size_t i : order) {
    pages.push_back(ds.pages[i]);
    ordered_images.push_back(images[i]);
  }
  const PredictorBank predict = [&](const TablePage& page, const GrayImage& img) { return predict_bank(page, img, bank); };
  rb.masking = masking_sweep(pages, ordered_images, opt.mask_factors, predict, cfg, opt.mask_scope, opt.workers);
  return rb;
}

inline nlohmann::json bundle_summary(const ReportBundle& rb) {
  using nlohmann::json;
  auto prf_json = [](const PRF& p) {
    return json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"tp", p.tp}, {"fp", p.fp}, {"fn", p.fn}};
  };
  auto buckets_json = [](const std::vector<ConfidenceBucket>& bs) {
    json a = json::array();
    for (const auto& b : bs)
      a.push_back({{"level", b.level}, {"n", b.n_cells}, {"n_correct", b.n_correct}, {"fraction", b.fraction_correct}});
    return a;
  };
  json models = json::array();
  for (const auto& r : rb.prf) models.push_back({{"model_label", r.label}, {"scores", prf_json(r.scores)}});
  json masking = json::array();
  for (const auto& c : rb.masking) masking.push_back({{"factor", c.factor}, {"curve", buckets_json(c.buckets)}});
  json degree = json::array();
  for (const auto& d : rb.degree)
    degree.push_back({{"degree", d.degree}, {"n", d.n_cells}, {"percent", d.percent}, {"mean_confidence", d.mean_confidence}});
  return {{"m_plus_1", rb.m_plus_1},
          {"theta0", rb.theta0},
          {"overall", prf_json(rb.prf.back().scores)},
          {"models", std::move(models)},
          {"confidence_curve", buckets_json(rb.confidence)},
          {"masking_curves", std::move(masking)},
          {"degree_table", std::move(degree)},
          {"removed_small_cells", rb.removed_small_cells}};
}

/// prf.csv, confidence_curve.csv, masking_curve.csv, degree_table.csv,
/// summary.json, predictions.json and merged.json under `dir`.
inline void write_bundle(const ReportBundle& rb, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "prf.csv", prf_csv(rb.prf));
  write_text_file(dir / "confidence_curve.csv", confidence_curve_csv(rb.confidence));
  write_text_file(dir / "masking_curve.csv", masking_curve_csv(rb.masking));
  write_text_file(dir / "degree_table.csv", degree_table_csv(rb.degree));
  write_text_file(dir / "summary.json", canonical_dump(bundle_summary(rb)));
  save_predictions(rb.predictions, dir / "predictions.json");
  save_merged(rb.merged, dir / "merged.json");
}

}  // namespace tabuq
