#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "tabuq/augment.hpp"
#include "tabuq/complexity.hpp"
#include "tabuq/ensemble.hpp"
#include "tabuq/errors.hpp"
#include "tabuq/geometry.hpp"
#include "tabuq/image.hpp"
#include "tabuq/parallel.hpp"
#include "tabuq/table_model.hpp"

namespace tabuq {

struct MatchPair {
  std::size_t pred_index = 0;
  int gt_id = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> unmatched_pred;
  std::vector<int> unmatched_gt;
  double theta0 = 0.5;
};

/// Greedy one-to-one matching: candidate pairs with IoU >= theta0 in
/// descending IoU order (ties to the lower prediction index, then lower GT
/// id); a pair is accepted when both sides are still free.
inline MatchResult match_cells(std::span<const BBox> pred, std::span<const Cell> gt, double theta0) {
  if (!(theta0 > 0.0 && theta0 <= 1.0)) throw InvalidArgument("theta0 must lie in (0,1]");
  std::vector<MatchPair> cand;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    for (const auto& c : gt) {
      const double v = iou(pred[p], c.bbox);
      if (v >= theta0) cand.push_back({p, c.id, v});
    }
  }
  std::sort(cand.begin(), cand.end(), [](const MatchPair& a, const MatchPair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.pred_index != b.pred_index) return a.pred_index < b.pred_index;
    return a.gt_id < b.gt_id;
  });

  MatchResult m;
  m.theta0 = theta0;
  std::vector<bool> pred_used(pred.size(), false);
  std::map<int, bool> gt_used;
  for (const auto& c : gt) gt_used[c.id] = false;
  for (const auto& c : cand) {
    if (pred_used[c.pred_index] || gt_used[c.gt_id]) continue;
    pred_used[c.pred_index] = true;
    gt_used[c.gt_id] = true;
    m.pairs.push_back(c);
  }
  for (std::size_t p = 0; p < pred.size(); ++p)
    if (!pred_used[p]) m.unmatched_pred.push_back(p);
  for (const auto& c : gt)
    if (!gt_used[c.id]) m.unmatched_gt.push_back(c.id);
  return m;
}

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

inline PRF prf_from_counts(long long tp, long long fp, long long fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw ConsistencyError("negative tp/fp/fn count");
  PRF r{0.0, 0.0, 0.0, tp, fp, fn};
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

inline PRF prf(const MatchResult& m, std::size_t n_pred, std::size_t n_gt) {
  const auto tp = static_cast<long long>(m.pairs.size());
  return prf_from_counts(tp, static_cast<long long>(n_pred) - tp, static_cast<long long>(n_gt) - tp);
}

/// Micro average: counts are summed before the ratios are taken.
inline PRF micro_average(std::span<const PRF> per_table) {
  long long tp = 0, fp = 0, fn = 0;
  for (const auto& r : per_table) {
    tp += r.tp;
    fp += r.fp;
    fn += r.fn;
  }
  return prf_from_counts(tp, fp, fn);
}

// ---------------------------------------------------------------------------
// Confidence buckets

struct ConfidenceBucket {
  double level = 0.0;
  std::size_t n_cells = 0;
  std::size_t n_correct = 0;
  double fraction_correct = 0.0;
};

/// Per-vote-count tallies, summed across tables before bucketing.
struct ConfidenceTally {
  int m_plus_1 = 0;
  std::vector<std::size_t> n_cells;    // index k = votes, 1..m_plus_1
  std::vector<std::size_t> n_correct;

  explicit ConfidenceTally(int m1 = 0) : m_plus_1(m1), n_cells(m1 + 1, 0), n_correct(m1 + 1, 0) {}

  void merge(const ConfidenceTally& o) {
    if (o.m_plus_1 != m_plus_1) throw InvalidInput("cannot merge tallies with different M+1");
    for (int k = 0; k <= m_plus_1; ++k) {
      n_cells[k] += o.n_cells[k];
      n_correct[k] += o.n_correct[k];
    }
  }

  std::vector<ConfidenceBucket> buckets() const {
    std::vector<ConfidenceBucket> out;
    for (int k = 1; k <= m_plus_1; ++k) {
      if (n_cells[k] == 0) continue;
      out.push_back({static_cast<double>(k) / m_plus_1, n_cells[k], n_correct[k],
                     static_cast<double>(n_correct[k]) / static_cast<double>(n_cells[k])});
    }
    return out;
  }
};

/// Vote count k for a confidence k/(M+1); throws if off the lattice.
inline int confidence_votes(double confidence, int m_plus_1) {
  if (m_plus_1 < 1) throw InvalidInput("M+1 must be >= 1");
  const double scaled = confidence * m_plus_1;
  const long k = std::lround(scaled);
  if (k < 1 || k > m_plus_1 || std::abs(scaled - static_cast<double>(k)) > 1e-9 * m_plus_1) {
    throw InvalidInput("confidence " + std::to_string(confidence) + " is not a multiple of 1/" +
                       std::to_string(m_plus_1));
  }
  return static_cast<int>(k);
}

inline std::vector<BBox> merged_boxes(std::span<const MergedCell> merged) {
  std::vector<BBox> boxes;
  boxes.reserve(merged.size());
  for (const auto& m : merged) boxes.push_back(m.bbox);
  return boxes;
}

inline ConfidenceTally confidence_tally(std::span<const MergedCell> merged, std::span<const Cell> gt,
                                        double theta0, int m_plus_1) {
  ConfidenceTally t(m_plus_1);
  std::vector<int> votes;
  for (const auto& m : merged) votes.push_back(confidence_votes(m.confidence, m_plus_1));
  const auto boxes = merged_boxes(merged);
  const MatchResult mr = match_cells(boxes, gt, theta0);
  std::vector<bool> correct(merged.size(), false);
  for (const auto& p : mr.pairs) correct[p.pred_index] = true;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    ++t.n_cells[votes[i]];
    t.n_correct[votes[i]] += correct[i];
  }
  return t;
}

/// Accuracy per confidence level; a merged cell is correct iff it matches a
/// ground-truth cell. Empty levels are omitted.
inline std::vector<ConfidenceBucket> confidence_accuracy(std::span<const MergedCell> merged,
                                                         std::span<const Cell> gt, double theta0,
                                                         int m_plus_1) {
  return confidence_tally(merged, gt, theta0, m_plus_1).buckets();
}

inline double mean_fraction_correct(std::span<const ConfidenceBucket> buckets) {
  if (buckets.empty()) return 0.0;
  double s = 0.0;
  for (const auto& b : buckets) s += b.fraction_correct;
  return s / static_cast<double>(buckets.size());
}

// ---------------------------------------------------------------------------
// Degree vs confidence

struct DegreeRow {
  std::size_t degree = 0;
  std::size_t n_cells = 0;
  double percent = 0.0;
  double mean_confidence = 0.0;
};

struct DegreeTally {
  std::map<std::size_t, std::pair<std::size_t, double>> by_degree;  // degree -> (count, sum)

  void merge(const DegreeTally& o) {
    for (const auto& [d, v] : o.by_degree) {
      by_degree[d].first += v.first;
      by_degree[d].second += v.second;
    }
  }

  std::vector<DegreeRow> rows() const {
    std::size_t total = 0;
    for (const auto& [d, v] : by_degree) total += v.first;
    std::vector<DegreeRow> out;
    for (const auto& [d, v] : by_degree) {
      out.push_back({d, v.first, 100.0 * static_cast<double>(v.first) / static_cast<double>(total),
                     v.second / static_cast<double>(v.first)});
    }
    return out;
  }
};

/// Each ground-truth cell takes the confidence of the merged cell matched to
/// it, or 0 when nothing matched.
inline DegreeTally degree_tally(const TablePage& page, std::span<const MergedCell> merged, double theta0) {
  DegreeTally t;
  const AdjacencyGraph g = build_adjacency(page.cells);
  const auto boxes = merged_boxes(merged);
  const MatchResult mr = match_cells(boxes, page.cells, theta0);
  std::map<int, double> conf;
  for (const auto& p : mr.pairs) conf[p.gt_id] = merged[p.pred_index].confidence;
  for (const auto& c : page.cells) {
    auto& slot = t.by_degree[g.degree(c.id)];
    slot.first += 1;
    auto it = conf.find(c.id);
    slot.second += it == conf.end() ? 0.0 : it->second;
  }
  return t;
}

inline std::vector<DegreeRow> degree_confidence_report(std::span<const TablePage> pages,
                                                       std::span<const std::vector<MergedCell>> merged,
                                                       double theta0) {
  if (pages.size() != merged.size()) throw InvalidInput("pages and merged outputs differ in length");
  DegreeTally total;
  for (std::size_t i = 0; i < pages.size(); ++i) total.merge(degree_tally(pages[i], merged[i], theta0));
  return total.rows();
}

// ---------------------------------------------------------------------------
// Masking sweep

/// Produces the M+1 prediction sets for one table given its (possibly
/// masked) base image.
using PredictorBank = std::function<std::vector<PredictionSet>(const TablePage&, const GrayImage&)>;

struct MaskingCurve {
  double factor = 1.0;
  std::vector<ConfidenceBucket> buckets;
};

/// For each factor: mask every image, run the bank, ensemble and bucket.
/// Tables may be processed on several workers; tallies are summed in page
/// order.
inline std::vector<MaskingCurve> masking_sweep(std::span<const TablePage> pages, std::span<const GrayImage> images,
                                               std::span<const double> factors, const PredictorBank& bank,
                                               const EnsembleConfig& cfg, MaskScope scope = MaskScope::whole_image,
                                               std::size_t workers = 1) {
  if (images.size() != pages.size()) throw InvalidInput("masking sweep: one image per page required");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].empty()) throw InvalidInput("masking sweep: table " + pages[i].table_id + " has no image");
  }
  std::vector<MaskingCurve> out;
  for (double f : factors) {
    const auto tallies = parallel_map(pages.size(), workers, [&](std::size_t i) {
      const GrayImage masked = mask_intensity(images[i], f, scope, pages[i].cells);
      const auto sets = bank(pages[i], masked);
      const auto merged = ensemble(sets, cfg);
      return confidence_tally(merged, pages[i].cells, cfg.theta0, static_cast<int>(sets.size()));
    });
    std::optional<ConfidenceTally> total;
    for (const auto& t : tallies) {
      if (!total)
        total = t;
      else
        total->merge(t);
    }
    out.push_back({f, total ? total->buckets() : std::vector<ConfidenceBucket>{}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV reports (fixed six decimals)

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct LabeledPRF {
  std::string label;
  PRF scores;
};

inline std::string prf_csv(std::span<const LabeledPRF> rows) {
  std::string s = "model_label,precision,recall,f1\n";
  for (const auto& r : rows) {
    s += r.label + "," + fixed6(r.scores.precision) + "," + fixed6(r.scores.recall) + "," + fixed6(r.scores.f1) +
         "\n";
  }
  return s;
}

inline std::string confidence_curve_csv(std::span<const ConfidenceBucket> buckets) {
  std::string s = "level,n,n_correct,fraction\n";
  for (const auto& b : buckets) {
    s += fixed6(b.level) + "," + std::to_string(b.n_cells) + "," + std::to_string(b.n_correct) + "," +
         fixed6(b.fraction_correct) + "\n";
  }
  return s;
}

inline std::string masking_curve_csv(std::span<const MaskingCurve> curves) {
  std::string s = "factor,level,fraction\n";
  for (const auto& c : curves)
    for (const auto& b : c.buckets) s += fixed6(c.factor) + "," + fixed6(b.level) + "," + fixed6(b.fraction_correct) + "\n";
  return s;
}

inline std::string degree_table_csv(std::span<const DegreeRow> rows) {
  std::string s = "degree,n,percent,mean_confidence\n";
  for (const auto& r : rows) {
    s += std::to_string(r.degree) + "," + std::to_string(r.n_cells) + "," + fixed6(r.percent) + "," +
         fixed6(r.mean_confidence) + "\n";
  }
  return s;
}

}  // namespace tabuq
