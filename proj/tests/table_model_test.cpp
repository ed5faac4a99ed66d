#include "tabuq/table_model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "test_util.hpp"

using namespace tabuq;
namespace fs = std::filesystem;
using tabuq::testing::grid_cells;
using tabuq::testing::page_of;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("tabuq_table_model_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Dataset sample_dataset() {
  Dataset ds{"test", {}};
  TablePage p = page_of(grid_cells(2, 3), 200, 60, "a");
  p.image_path = "images/a.png";
  p.cells[1].content = "total";
  ds.pages.push_back(p);
  ds.pages.push_back(page_of(grid_cells(1, 1), 60, 30, "b"));
  return ds;
}

}  // namespace

TEST(Dataset, SaveLoadRoundTripIsExact) {
  const fs::path dir = temp_dir("roundtrip");
  const Dataset ds = sample_dataset();
  save_dataset(ds, dir / "a.json");
  const Dataset back = load_dataset(dir / "a.json");
  EXPECT_EQ(back, ds);
  EXPECT_EQ(back.pages.size(), 2u);
}

TEST(Dataset, SaveIsByteStable) {
  const fs::path dir = temp_dir("stable");
  const Dataset ds = sample_dataset();
  save_dataset(ds, dir / "1.json");
  save_dataset(ds, dir / "2.json");
  save_dataset(load_dataset(dir / "1.json"), dir / "3.json");
  const std::string first = read_text_file(dir / "1.json");
  EXPECT_EQ(first, read_text_file(dir / "2.json"));
  EXPECT_EQ(first, read_text_file(dir / "3.json"));
}

TEST(Dataset, EmptyDatasetHasEmptyPageList) {
  const fs::path dir = temp_dir("empty");
  save_dataset(Dataset{"none", {}}, dir / "e.json");
  const auto j = read_json_file(dir / "e.json");
  EXPECT_TRUE(j.at("pages").is_array());
  EXPECT_TRUE(j.at("pages").empty());
  EXPECT_TRUE(load_dataset(dir / "e.json").pages.empty());
}

TEST(Dataset, RandomDatasetsRoundTrip) {
  const fs::path dir = temp_dir("random");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset ds{"r" + std::to_string(trial), {}};
    const int n_pages = 1 + trial % 4;
    for (int p = 0; p < n_pages; ++p) {
      std::vector<Cell> cells;
      const int rows = 1 + static_cast<int>(u(rng) * 4), cols = 1 + static_cast<int>(u(rng) * 4);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          // Irrational-ish coordinates exercise the float formatting.
          const double x = c * 37.0 + u(rng) * 3.0, y = r * 23.0 + u(rng) * 3.0;
          cells.push_back(Cell{r * cols + c, BBox(x, y, x + 30.0 + u(rng), y + 17.0 + u(rng)), GridCoord{r, r, c, c},
                               u(rng) < 0.3 ? std::optional<std::string>("x\"y\n") : std::nullopt});
        }
      ds.pages.push_back(page_of(std::move(cells), 200, 120, "p" + std::to_string(p)));
    }
    save_dataset(ds, dir / "d.json");
    EXPECT_EQ(load_dataset(dir / "d.json"), ds);
  }
}

TEST(Dataset, MissingFileIsIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/tabuq/dataset.json"), IoError);
}

TEST(Dataset, SchemaViolationReportsFieldPath) {
  const fs::path dir = temp_dir("schema");
  write_text_file(dir / "bad.json",
                  R"({"split_label":"x","pages":[{"table_id":"a","image_path":null,"width":10,"height":10,)"
                  R"("cells":[{"id":0,"bbox":[0,0,5],"grid":[0,0,0,0],"content":null}]}]})");
  try {
    load_dataset(dir / "bad.json");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.where(), "$.pages[0].cells[0].bbox");
  }
  write_text_file(dir / "bad2.json", R"({"pages":[]})");
  EXPECT_THROW(load_dataset(dir / "bad2.json"), ParseError);
  write_text_file(dir / "bad3.json", "{not json");
  EXPECT_THROW(load_dataset(dir / "bad3.json"), ParseError);
}

TEST(Dataset, CellOutsideImageNamesTheCell) {
  const fs::path dir = temp_dir("bounds");
  Dataset ds{"x", {page_of(grid_cells(1, 3), 100, 30, "a")}};  // third cell ends at x=170
  save_dataset(ds, dir / "d.json");
  try {
    load_dataset(dir / "d.json");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("cell ids 1,2"), std::string::npos) << msg;
  }
}

TEST(Dataset, DuplicateIdsAndGridOverlapAreRejected) {
  TablePage p = page_of(grid_cells(1, 2), 200, 30);
  p.cells[1].id = 0;
  EXPECT_THROW(validate(p), ValidationError);

  TablePage q = page_of(grid_cells(1, 2), 200, 30);
  q.cells[0].grid.end_col = 1;  // now covers the neighbour's position
  EXPECT_THROW(validate(q), ValidationError);

  Dataset ds{"x", {page_of(grid_cells(1, 1), 60, 30, "a"), page_of(grid_cells(1, 1), 60, 30, "a")}};
  EXPECT_THROW(validate(ds), ValidationError);
}

TEST(Predictions, RoundTripAndDuplicateModelIndex) {
  const fs::path dir = temp_dir("preds");
  std::vector<TablePredictions> tables{
      {"a", {{0, "original", {BBox(0, 0, 10, 10), BBox(1.25, 2, 3, 4.5)}}, {1, "NLT", {}}}},
      {"b", {{0, "original", {BBox(5, 5, 6, 6)}}}}};
  save_predictions(tables, dir / "p.json");
  EXPECT_EQ(load_predictions(dir / "p.json"), tables);

  write_text_file(dir / "single.json",
                  R"({"table_id":"s","predictions":[{"model_index":0,"model_label":"m","boxes":[[0,0,1,1]]}]})");
  const auto single = load_predictions(dir / "single.json");
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].predictions[0].boxes[0], BBox(0, 0, 1, 1));

  write_text_file(dir / "dup.json", R"({"table_id":"s","predictions":[)"
                                    R"({"model_index":0,"model_label":"m","boxes":[]},)"
                                    R"({"model_index":0,"model_label":"n","boxes":[]}]})");
  EXPECT_THROW(load_predictions(dir / "dup.json"), ValidationError);
}

TEST(IcdarImport, SampleFile) {
  const TablePage p = import_icdar_xml(fs::path(TABUQ_TEST_DATA) / "cTDaR_sample.xml");
  EXPECT_EQ(p.table_id, "cTDaR_sample");
  ASSERT_EQ(p.cells.size(), 3u);
  EXPECT_EQ(p.cells[0].id, 0);
  EXPECT_EQ(p.cells[0].grid, (GridCoord{0, 0, 0, 1}));
  EXPECT_EQ(p.cells[1].bbox, BBox(10, 20, 110, 60));
  EXPECT_EQ(p.cells[2].bbox, BBox(5, 55, 120, 90));
  EXPECT_EQ(p.width, 220);
  EXPECT_EQ(p.height, 100);
}

namespace {

TablePage import_string(const std::string& xml, const std::string& name) {
  const fs::path dir = temp_dir("icdar");
  write_text_file(dir / (name + ".xml"), xml);
  return import_icdar_xml(dir / (name + ".xml"));
}

std::string one_cell(const std::string& attrs, const std::string& points) {
  return "<document><table><cell " + attrs + "><Coords points=\"" + points + "\"/></cell></table></document>";
}

const std::string kGrid = R"(start-row="0" end-row="0" start-col="0" end-col="0")";

}  // namespace

TEST(IcdarImport, PointRulesAndEmptyTable) {
  EXPECT_EQ(import_string(one_cell(kGrid, "10,20 110,20 110,60 10,60"), "quad").cells[0].bbox,
            BBox(10, 20, 110, 60));
  EXPECT_EQ(import_string(one_cell(kGrid, "10,20 5,90"), "diag").cells[0].bbox, BBox(5, 20, 10, 90));
  EXPECT_TRUE(import_string("<document><table></table></document>", "empty").cells.empty());
}

TEST(IcdarImport, Errors) {
  EXPECT_THROW(import_string(one_cell(kGrid, "10,20 abc"), "bad"), ParseError);
  EXPECT_THROW(import_string(one_cell(kGrid, "10;20 30;40"), "bad"), ParseError);
  EXPECT_THROW(import_string(one_cell(kGrid, ""), "bad"), ParseError);
  EXPECT_THROW(import_string(one_cell(R"(start-row="0" end-row="0" start-col="0")", "0,0 5,5"), "bad"), ParseError);
  EXPECT_THROW(import_string("<document><table><cell " + kGrid + "/></table></document>", "bad"), ParseError);
  EXPECT_THROW(import_string("<document></document>", "bad"), ParseError);
  EXPECT_THROW(import_string("<document><table>", "bad"), ParseError);
  // Collinear points give a zero-area box.
  EXPECT_THROW(import_string(one_cell(kGrid, "10,20 50,20 90,20"), "bad"), ValidationError);
}
