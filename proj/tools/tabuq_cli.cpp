// tabuq: command-line front end for the table-structure uncertainty toolkit.
//
//   synth         generate synthetic tables (dataset.json, images, masks)
//   augment       apply nlt/hlt/vlt/hvlt/mask2/mask3 to a dataset's images
//   import-icdar  convert cTDaR-style XML ground truth to dataset JSON
//   predict-mock  run a mock predictor bank over a dataset
//   ensemble      merge predictions into cells with confidence scores
//   eval          PRF, confidence curve and degree table for merged cells
//   run           the whole pipeline plus the masking sweep
//   mask-eval     masking sweep only

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tabuq/tabuq.hpp"

namespace fs = std::filesystem;
using namespace tabuq;

namespace {

struct GlobalOpts {
  double theta0 = 0.5;
  std::uint64_t seed = 7;
  std::size_t parallel = 1;
  std::string out;
};

struct EnsembleOpts {
  bool filter = false;
  double kappa = 0.5;
  std::string fusion = "mean";
  std::optional<std::uint64_t> base_order_seed;
};

EnsembleConfig make_config(const GlobalOpts& g, const EnsembleOpts& e) {
  EnsembleConfig cfg;
  cfg.theta0 = g.theta0;
  cfg.apply_small_cell_filter = e.filter;
  cfg.kappa = e.kappa;
  if (e.fusion == "mean")
    cfg.fusion_rule = FusionRule::mean;
  else if (e.fusion == "union")
    cfg.fusion_rule = FusionRule::union_envelope;
  else if (e.fusion == "base")
    cfg.fusion_rule = FusionRule::base;
  else
    throw InvalidArgument("unknown fusion rule '" + e.fusion + "'");
  cfg.base_order_seed = e.base_order_seed;
  cfg.validate();
  return cfg;
}

MaskScope parse_scope(const std::string& s) {
  if (s == "whole_image" || s == "whole") return MaskScope::whole_image;
  if (s == "per_cell" || s == "cell") return MaskScope::per_cell;
  throw InvalidArgument("unknown mask scope '" + s + "'");
}

void add_ensemble_flags(CLI::App* cmd, EnsembleOpts& e) {
  cmd->add_flag("--filter", e.filter, "apply the small-cell filter before merging");
  cmd->add_option("--kappa", e.kappa, "small-cell area ratio threshold")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--fusion", e.fusion, "merged box rule: mean, union or base");
  cmd->add_option("--base-order-seed", e.base_order_seed, "visit base models in a seeded random order");
}

void add_synth_flags(CLI::App* cmd, SynthParams& p) {
  cmd->add_option("--rows", p.rows, "rows per table")->check(CLI::Range(1, 1000));
  cmd->add_option("--cols", p.cols, "columns per table")->check(CLI::Range(1, 1000));
  cmd->add_option("--span-prob", p.span_prob, "probability of a span merge")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--cell-w", p.cell_w, "cell width in pixels")->check(CLI::Range(1, 10000));
  cmd->add_option("--cell-h", p.cell_h, "cell height in pixels")->check(CLI::Range(1, 10000));
  cmd->add_option("--gap", p.gap, "gap between cells in pixels")->check(CLI::NonNegativeNumber);
  cmd->add_option("--margin", p.margin, "page margin in pixels")->check(CLI::NonNegativeNumber);
  cmd->add_option("--glyph-density", p.glyph_density, "ink coverage of cell interiors")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--ink", p.ink_value, "glyph intensity");
}

std::vector<ModelSpec> bank_or_default(const std::string& path, std::uint64_t seed) {
  return path.empty() ? default_bank(seed) : load_bank(path);
}

fs::path require_out(const GlobalOpts& g) {
  if (g.out.empty()) throw InvalidArgument("--out is required");
  return g.out;
}

fs::path dataset_file(const fs::path& in) { return fs::is_directory(in) ? in / "dataset.json" : in; }

std::vector<SyntheticTable> synthesize(const SynthParams& p, std::size_t n, const GlobalOpts& g) {
  return generate_dataset(p, n, g.seed, g.parallel);
}

void split(const std::vector<SyntheticTable>& tables, Dataset& ds, std::vector<GrayImage>& images) {
  for (const auto& t : tables) {
    TablePage page = t.page;
    page.image_path = image_rel_path(page.table_id).generic_string();
    ds.pages.push_back(std::move(page));
    images.push_back(t.image);
  }
}

// Pairs merged outputs with ground-truth pages by table_id; any id present on
// one side only is an error.
std::vector<std::pair<const TablePage*, const MergedTable*>> pair_tables(const Dataset& gt,
                                                                         const std::vector<MergedTable>& merged) {
  std::map<std::string, const MergedTable*> by_id;
  for (const auto& m : merged) by_id[m.table_id] = &m;
  std::set<std::string> gt_ids;
  for (const auto& p : gt.pages) gt_ids.insert(p.table_id);
  std::string missing;
  for (const auto& id : gt_ids)
    if (!by_id.count(id)) missing += " " + id;
  for (const auto& [id, m] : by_id)
    if (!gt_ids.count(id)) missing += " " + id;
  if (!missing.empty()) throw InvalidInput("table ids not present in both files:" + missing);

  std::vector<const TablePage*> pages;
  for (const auto& p : gt.pages) pages.push_back(&p);
  std::sort(pages.begin(), pages.end(), [](auto* a, auto* b) { return a->table_id < b->table_id; });
  std::vector<std::pair<const TablePage*, const MergedTable*>> out;
  for (auto* p : pages) out.emplace_back(p, by_id.at(p->table_id));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty quantification for table structure recognition"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--theta0", g.theta0, "IoU threshold")->check(CLI::Range(0.0, 1.0));
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--parallel", g.parallel, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output path");

  // synth
  SynthParams synth_p;
  std::size_t synth_n = 10;
  std::string split_label = "synthetic";
  bool no_lines = false;
  auto* synth = app.add_subcommand("synth", "generate synthetic tables");
  add_synth_flags(synth, synth_p);
  synth->add_option("--n", synth_n, "number of tables")->check(CLI::PositiveNumber);
  synth->add_option("--split", split_label, "split label");
  synth->add_flag("--no-lines", no_lines, "render without ruling lines");

  // augment
  std::string aug_in, aug_name, aug_scope = "whole_image";
  auto* aug = app.add_subcommand("augment", "augment a dataset's images");
  aug->add_option("--in", aug_in, "dataset directory or dataset.json")->required();
  aug->add_option("--aug", aug_name, "nlt, hlt, vlt, hvlt, mask2 or mask3")->required();
  aug->add_option("--mask-scope", aug_scope, "whole_image or per_cell");

  // import-icdar
  std::vector<std::string> xml_in;
  std::string import_split = "icdar";
  auto* imp = app.add_subcommand("import-icdar", "convert cTDaR XML to dataset JSON");
  imp->add_option("inputs", xml_in, "XML files")->required()->check(CLI::ExistingFile);
  imp->add_option("--split", import_split, "split label");

  // predict-mock
  std::string pm_in, pm_bank;
  auto* pm = app.add_subcommand("predict-mock", "run a mock predictor bank");
  pm->add_option("--in", pm_in, "dataset directory or dataset.json")->required();
  pm->add_option("--bank", pm_bank, "predictor bank config (default bank if omitted)");

  // ensemble
  std::string ens_in;
  EnsembleOpts ens_opts;
  auto* ens = app.add_subcommand("ensemble", "merge predictions into confidence-scored cells");
  ens->add_option("--predictions", ens_in, "predictions JSON")->required()->check(CLI::ExistingFile);
  add_ensemble_flags(ens, ens_opts);

  // eval
  std::string ev_merged, ev_gt;
  auto* ev = app.add_subcommand("eval", "evaluate merged cells against ground truth");
  ev->add_option("--merged", ev_merged, "merged-cell JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", ev_gt, "ground-truth dataset JSON or directory")->required();

  // run
  std::string run_dataset, run_bank, run_scope = "whole_image";
  SynthParams run_p;
  std::size_t run_n = 100;
  EnsembleOpts run_opts;
  std::vector<double> run_factors{1.0, 2.0, 3.0};
  auto* run = app.add_subcommand("run", "full pipeline and report bundle");
  run->add_option("--dataset", run_dataset, "dataset directory (synthesized when omitted)");
  run->add_option("--bank", run_bank, "predictor bank config (default bank if omitted)");
  run->add_option("--n", run_n, "tables to synthesize")->check(CLI::PositiveNumber);
  run->add_option("--factors", run_factors, "masking factors")->delimiter(',');
  run->add_option("--mask-scope", run_scope, "whole_image or per_cell");
  add_synth_flags(run, run_p);
  add_ensemble_flags(run, run_opts);

  // mask-eval
  std::string me_in, me_bank, me_scope = "whole_image";
  std::vector<double> me_factors{1.0, 2.0, 3.0};
  EnsembleOpts me_opts;
  auto* me = app.add_subcommand("mask-eval", "masking sweep");
  me->add_option("--in", me_in, "dataset directory")->required();
  me->add_option("--bank", me_bank, "predictor bank config (default bank if omitted)");
  me->add_option("--factors", me_factors, "masking factors")->delimiter(',');
  me->add_option("--mask-scope", me_scope, "whole_image or per_cell");
  add_ensemble_flags(me, me_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) {
      synth_p.draw_lines = !no_lines;
      const fs::path out = require_out(g);
      write_synthetic_dataset(synthesize(synth_p, synth_n, g), split_label, out);
    } else if (*aug) {
      const Augmentation a = parse_augmentation(aug_name);
      const MaskScope scope = parse_scope(aug_scope);
      const fs::path ds_path = dataset_file(aug_in);
      const Dataset ds = load_dataset(ds_path);
      const auto images = load_images(ds, ds_path.parent_path(), g.parallel);
      const fs::path out = require_out(g) / augmentation_name(a);
      fs::create_directories(out);
      parallel_map(ds.pages.size(), g.parallel, [&](std::size_t i) {
        const GrayImage img = augment(images[i], ds.pages[i], a, scope);
        write_png(img, out / fs::path(*ds.pages[i].image_path).filename());
        return 0;
      });
    } else if (*imp) {
      Dataset ds{import_split, {}};
      for (const auto& p : xml_in) ds.pages.push_back(import_icdar_xml(p));
      validate(ds);
      save_dataset(ds, require_out(g));
    } else if (*pm) {
      const fs::path ds_path = dataset_file(pm_in);
      const Dataset ds = load_dataset(ds_path);
      const auto images = load_images(ds, ds_path.parent_path(), g.parallel);
      const auto bank = bank_or_default(pm_bank, g.seed);
      auto tables = parallel_map(ds.pages.size(), g.parallel, [&](std::size_t i) {
        return TablePredictions{ds.pages[i].table_id, predict_bank(ds.pages[i], images[i], bank)};
      });
      save_predictions(tables, require_out(g));
    } else if (*ens) {
      const EnsembleConfig cfg = make_config(g, ens_opts);
      const auto tables = load_predictions(ens_in);
      std::vector<MergedTable> merged;
      std::size_t removed = 0;
      for (const auto& tp : tables) {
        EnsembleResult r = ensemble_detailed(tp.predictions, cfg);
        removed += r.removed.size();
        merged.push_back({tp.table_id, r.m_plus_1, cfg.theta0, std::move(r.cells)});
      }
      if (cfg.apply_small_cell_filter) std::cerr << "small-cell filter removed " << removed << " boxes\n";
      save_merged(merged, require_out(g));
    } else if (*ev) {
      const Dataset gt = load_dataset(dataset_file(ev_gt));
      const auto merged = load_merged(ev_merged);
      const auto pairs = pair_tables(gt, merged);
      const fs::path out = require_out(g);
      fs::create_directories(out);
      std::vector<PRF> per_table;
      std::optional<ConfidenceTally> conf;
      DegreeTally deg;
      for (const auto& [page, m] : pairs) {
        const auto boxes = merged_boxes(m->cells);
        per_table.push_back(prf(match_cells(boxes, page->cells, g.theta0), boxes.size(), page->cells.size()));
        ConfidenceTally t = confidence_tally(m->cells, page->cells, g.theta0, m->m_plus_1);
        if (!conf)
          conf = t;
        else
          conf->merge(t);
        deg.merge(degree_tally(*page, m->cells, g.theta0));
      }
      const std::vector<LabeledPRF> rows{{"ensemble", micro_average(per_table)}};
      write_text_file(out / "prf.csv", prf_csv(rows));
      write_text_file(out / "confidence_curve.csv",
                      confidence_curve_csv(conf ? conf->buckets() : std::vector<ConfidenceBucket>{}));
      write_text_file(out / "degree_table.csv", degree_table_csv(deg.rows()));
    } else if (*run) {
      const EnsembleConfig cfg = make_config(g, run_opts);
      const fs::path out = require_out(g);
      Dataset ds;
      std::vector<GrayImage> images;
      if (run_dataset.empty()) {
        const auto tables = synthesize(run_p, run_n, g);
        write_synthetic_dataset(tables, "synthetic", out / "dataset");
        ds.split_label = "synthetic";
        split(tables, ds, images);
      } else {
        const fs::path ds_path = dataset_file(run_dataset);
        ds = load_dataset(ds_path);
        images = load_images(ds, ds_path.parent_path(), g.parallel);
      }
      const auto bank = bank_or_default(run_bank, g.seed);
      PipelineOptions opt;
      opt.workers = g.parallel;
      opt.mask_factors = run_factors;
      opt.mask_scope = parse_scope(run_scope);
      const ReportBundle rb = run_pipeline(ds, images, bank, cfg, opt);
      write_bundle(rb, out);
      write_text_file(out / "bank.ini", format_bank(bank));
    } else if (*me) {
      const EnsembleConfig cfg = make_config(g, me_opts);
      const fs::path ds_path = dataset_file(me_in);
      const Dataset ds = load_dataset(ds_path);
      const auto images = load_images(ds, ds_path.parent_path(), g.parallel);
      const auto bank = bank_or_default(me_bank, g.seed);
      const PredictorBank predict = [&](const TablePage& page, const GrayImage& img) {
        return predict_bank(page, img, bank);
      };
      const auto curves = masking_sweep(ds.pages, images, me_factors, predict, cfg, parse_scope(me_scope), g.parallel);
      const fs::path out = require_out(g);
      fs::create_directories(out);
      write_text_file(out / "masking_curve.csv", masking_curve_csv(curves));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
