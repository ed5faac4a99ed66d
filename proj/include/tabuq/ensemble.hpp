#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabuq/errors.hpp"
#include "tabuq/geometry.hpp"
#include "tabuq/table_model.hpp"

namespace tabuq {

enum class FusionRule { mean, union_envelope, base };

struct EnsembleConfig {
  double theta0 = 0.5;
  bool apply_small_cell_filter = false;
  double kappa = 0.5;
  FusionRule fusion_rule = FusionRule::mean;
  // When set, base models are visited in a seeded random order instead of
  // ascending model_index.
  std::optional<std::uint64_t> base_order_seed;

  void validate() const {
    if (!(theta0 > 0.0 && theta0 <= 1.0)) throw InvalidArgument("theta0 must lie in (0,1]");
    if (!(kappa > 0.0 && kappa <= 1.0)) throw InvalidArgument("kappa must lie in (0,1]");
  }
};

/// Reference to one input box.
struct BoxRef {
  int model_index = 0;
  std::size_t box_index = 0;

  friend auto operator<=>(const BoxRef&, const BoxRef&) = default;
};

struct ClusterMember {
  BoxRef ref;
  BBox box;
  double iou_with_seed = 1.0;  // 1.0 for the seed itself

  friend bool operator==(const ClusterMember&, const ClusterMember&) = default;
};

/// Predictions judged to be the same physical cell. members[0] is the seed;
/// every model appears at most once.
struct Cluster {
  std::vector<ClusterMember> members;

  const ClusterMember& seed() const { return members.front(); }
  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct MergedCell {
  BBox bbox;
  double confidence = 0.0;
  std::vector<int> contributing_models;  // ascending
  Cluster cluster;

  std::size_t votes() const noexcept { return contributing_models.size(); }
  friend bool operator==(const MergedCell&, const MergedCell&) = default;
};

struct RemovedBox {
  BoxRef ref;
  BoxRef container;
};

struct FilterResult {
  std::vector<PredictionSet> sets;
  std::vector<RemovedBox> removed;
};

/// Drops every box that sits inside some other box of the pooled input (any
/// model) and covers at most `kappa` of its area. Removal is decided against
/// the original pool and applied at once, which makes the filter idempotent.
/// Box indices in the returned sets are renumbered; `removed` refers to the
/// input indices.
inline FilterResult small_cell_filter(const std::vector<PredictionSet>& sets, double kappa) {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw InvalidArgument("kappa must lie in (0,1]");
  struct Entry {
    BoxRef ref;
    const BBox* box;
    double area;
  };
  std::vector<Entry> pool;
  for (const auto& ps : sets)
    for (std::size_t i = 0; i < ps.boxes.size(); ++i)
      pool.push_back({{ps.model_index, i}, &ps.boxes[i], area(ps.boxes[i])});

  FilterResult out;
  std::vector<bool> drop(pool.size(), false);
  for (std::size_t s = 0; s < pool.size(); ++s) {
    for (std::size_t l = 0; l < pool.size(); ++l) {
      if (l == s) continue;
      // Identical boxes are agreement between models, never a small cell.
      if (*pool[l].box == *pool[s].box) continue;
      if (pool[s].area / pool[l].area <= kappa && contains(*pool[l].box, *pool[s].box)) {
        drop[s] = true;
        out.removed.push_back({pool[s].ref, pool[l].ref});
        break;
      }
    }
  }
  std::size_t k = 0;
  for (const auto& ps : sets) {
    PredictionSet kept{ps.model_index, ps.model_label, {}};
    for (std::size_t i = 0; i < ps.boxes.size(); ++i, ++k)
      if (!drop[k]) kept.boxes.push_back(ps.boxes[i]);
    out.sets.push_back(std::move(kept));
  }
  return out;
}

namespace detail {

inline void check_unique_models(const std::vector<PredictionSet>& sets) {
  std::vector<int> idx;
  for (const auto& s : sets) idx.push_back(s.model_index);
  std::sort(idx.begin(), idx.end());
  if (std::adjacent_find(idx.begin(), idx.end()) != idx.end()) {
    throw InvalidInput("duplicate model_index in ensemble input");
  }
}

}  // namespace detail

/// Greedy cross-model clustering. Each base model in turn seeds one cluster
/// per remaining box and pulls in, from every other model, the unclaimed box
/// with the highest IoU against the seed (ties to the lowest box index),
/// provided that IoU >= theta0. Claimed boxes leave their pools for good.
inline std::vector<Cluster> merge_predictions(const std::vector<PredictionSet>& sets,
                                              const EnsembleConfig& cfg) {
  cfg.validate();
  if (sets.empty()) throw InvalidInput("ensemble needs at least one prediction set");
  detail::check_unique_models(sets);

  std::vector<std::size_t> order(sets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sets[a].model_index < sets[b].model_index; });
  const std::vector<std::size_t> by_index = order;  // candidate models, ascending
  if (cfg.base_order_seed) {
    std::mt19937_64 rng(*cfg.base_order_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::vector<std::vector<bool>> taken(sets.size());
  for (std::size_t m = 0; m < sets.size(); ++m) taken[m].assign(sets[m].boxes.size(), false);

  std::vector<Cluster> clusters;
  for (std::size_t base : order) {
    const PredictionSet& bs = sets[base];
    for (std::size_t bi = 0; bi < bs.boxes.size(); ++bi) {
      if (taken[base][bi]) continue;
      taken[base][bi] = true;
      const BBox& seed = bs.boxes[bi];
      Cluster cl;
      cl.members.push_back({{bs.model_index, bi}, seed, 1.0});
      for (std::size_t other : by_index) {
        if (other == base) continue;
        const PredictionSet& os = sets[other];
        std::optional<std::size_t> best;
        double best_iou = 0.0;
        for (std::size_t oi = 0; oi < os.boxes.size(); ++oi) {
          if (taken[other][oi]) continue;
          const double v = iou(seed, os.boxes[oi]);
          if (v >= cfg.theta0 && (!best || v > best_iou)) {
            best = oi;
            best_iou = v;
          }
        }
        if (best) {
          taken[other][*best] = true;
          cl.members.push_back({{os.model_index, *best}, os.boxes[*best], best_iou});
        }
      }
      clusters.push_back(std::move(cl));
    }
  }
  return clusters;
}

inline BBox fuse_bbox(const Cluster& cluster, FusionRule rule) {
  if (cluster.members.empty()) throw InvalidInput("cannot fuse an empty cluster");
  const auto& ms = cluster.members;
  switch (rule) {
    case FusionRule::base: return ms.front().box;
    case FusionRule::union_envelope: {
      double x1 = ms[0].box.x1(), y1 = ms[0].box.y1(), x2 = ms[0].box.x2(), y2 = ms[0].box.y2();
      for (const auto& m : ms) {
        x1 = std::min(x1, m.box.x1());
        y1 = std::min(y1, m.box.y1());
        x2 = std::max(x2, m.box.x2());
        y2 = std::max(y2, m.box.y2());
      }
      return BBox(x1, y1, x2, y2);
    }
    case FusionRule::mean: {
      if (ms.size() == 1) return ms.front().box;
      double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
      for (const auto& m : ms) {
        x1 += m.box.x1();
        y1 += m.box.y1();
        x2 += m.box.x2();
        y2 += m.box.y2();
      }
      const double n = static_cast<double>(ms.size());
      return BBox(x1 / n, y1 / n, x2 / n, y2 / n);
    }
  }
  return ms.front().box;
}

struct EnsembleResult {
  std::vector<MergedCell> cells;
  std::vector<RemovedBox> removed;  // empty unless the small-cell filter ran
  int m_plus_1 = 0;
};

/// Full ensemble: optional small-cell filter, clustering, then one merged
/// cell per cluster with confidence = contributing models / (M+1). Output is
/// ordered by (y1, x1, y2, x2), then by contributing models.
inline EnsembleResult ensemble_detailed(const std::vector<PredictionSet>& sets, const EnsembleConfig& cfg) {
  cfg.validate();
  if (sets.empty()) throw InvalidInput("ensemble needs at least one prediction set");
  detail::check_unique_models(sets);

  EnsembleResult res;
  res.m_plus_1 = static_cast<int>(sets.size());
  std::vector<Cluster> clusters;
  if (cfg.apply_small_cell_filter) {
    FilterResult fr = small_cell_filter(sets, cfg.kappa);
    res.removed = std::move(fr.removed);
    clusters = merge_predictions(fr.sets, cfg);
  } else {
    clusters = merge_predictions(sets, cfg);
  }

  const double denom = static_cast<double>(res.m_plus_1);
  for (auto& cl : clusters) {
    std::vector<int> models;
    for (const auto& m : cl.members) models.push_back(m.ref.model_index);
    std::sort(models.begin(), models.end());
    models.erase(std::unique(models.begin(), models.end()), models.end());
    const double conf = static_cast<double>(models.size()) / denom;
    BBox fused = fuse_bbox(cl, cfg.fusion_rule);
    res.cells.push_back(MergedCell{fused, conf, std::move(models), std::move(cl)});
  }
  std::sort(res.cells.begin(), res.cells.end(), [](const MergedCell& a, const MergedCell& b) {
    const auto ka = std::make_tuple(a.bbox.y1(), a.bbox.x1(), a.bbox.y2(), a.bbox.x2());
    const auto kb = std::make_tuple(b.bbox.y1(), b.bbox.x1(), b.bbox.y2(), b.bbox.x2());
    if (ka != kb) return ka < kb;
    return a.contributing_models < b.contributing_models;
  });
  return res;
}

inline std::vector<MergedCell> ensemble(const std::vector<PredictionSet>& sets, const EnsembleConfig& cfg) {
  return ensemble_detailed(sets, cfg).cells;
}

// ---------------------------------------------------------------------------
// Merged-cell JSON

/// Merged cells of one table as stored on disk.
struct MergedTable {
  std::string table_id;
  int m_plus_1 = 0;
  double theta0 = 0.5;
  std::vector<MergedCell> cells;  // `cluster` is not serialized
};

namespace json_io {

inline json merged_to_json(const MergedTable& t) {
  json cells = json::array();
  for (const auto& c : t.cells) {
    cells.push_back({{"bbox", box_to_json(c.bbox)}, {"confidence", c.confidence}, {"models", c.contributing_models}});
  }
  return {{"table_id", t.table_id}, {"m_plus_1", t.m_plus_1}, {"theta0", t.theta0}, {"cells", std::move(cells)}};
}

inline MergedTable merged_from_json(const json& j, const std::string& path) {
  MergedTable t;
  t.table_id = get_string(j, "table_id", path);
  t.m_plus_1 = static_cast<int>(get_int(j, "m_plus_1", path));
  if (t.m_plus_1 < 1) throw ParseError(path + ".m_plus_1", "must be >= 1");
  t.theta0 = get_number(j, "theta0", path);
  const json& cells = get_array(j, "cells", path);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string cp = path + ".cells[" + std::to_string(i) + "]";
    const json& models = get_array(cells[i], "models", cp);
    std::vector<int> ms;
    for (const auto& m : models) {
      if (!m.is_number_integer()) throw ParseError(cp + ".models", "expected integers");
      ms.push_back(m.get<int>());
    }
    t.cells.push_back(MergedCell{box_from_json(field(cells[i], "bbox", cp), cp + ".bbox"),
                                 get_number(cells[i], "confidence", cp), std::move(ms), Cluster{}});
  }
  return t;
}

}  // namespace json_io

inline std::vector<MergedTable> load_merged(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  std::vector<MergedTable> out;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i)
      out.push_back(json_io::merged_from_json(j[i], "$[" + std::to_string(i) + "]"));
  } else {
    out.push_back(json_io::merged_from_json(j, "$"));
  }
  return out;
}

inline void save_merged(const std::vector<MergedTable>& tables, const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tables) arr.push_back(json_io::merged_to_json(t));
  write_text_file(path, canonical_dump(arr));
}

}  // namespace tabuq
