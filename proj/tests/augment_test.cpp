#include "tabuq/augment.hpp"

#include <gtest/gtest.h>

#include <random>

#include "tabuq/harness.hpp"
#include "test_util.hpp"

using namespace tabuq;
using tabuq::testing::grid_cells;
using tabuq::testing::page_of;

namespace {

std::size_t dark_pixels(const GrayImage& img) {
  std::size_t n = 0;
  for (auto v : img.pixels()) n += v < 128;
  return n;
}

SynthParams busy_params() {
  SynthParams p;
  p.rows = 6;
  p.cols = 4;
  p.span_prob = 0.2;
  p.glyph_density = 0.45;
  return p;
}

}  // namespace

TEST(DetectRulingLines, TwoPixelBandExact) {
  GrayImage img(100, 60);
  for (int y = 20; y < 22; ++y)
    for (int x = 0; x < 100; ++x) img.at(x, y) = 0;
  const BitMask m = detect_ruling_lines(img);
  EXPECT_EQ(m.count(), 200u);
  for (int x = 0; x < 100; ++x) EXPECT_TRUE(m.test(x, 20) && m.test(x, 21));
}

TEST(DetectRulingLines, VerticalAndShortRuns) {
  GrayImage img(80, 100);
  for (int y = 0; y < 100; ++y) img.at(40, y) = 10;
  for (int x = 0; x < 20; ++x) img.at(x, 5) = 10;  // 20 < 0.3 * 80
  const BitMask m = detect_ruling_lines(img);
  EXPECT_EQ(m.count(), 100u);
  EXPECT_FALSE(m.test(0, 5));
}

TEST(DetectRulingLines, ThickBlocksAreText) {
  // A wide dark block taller than max_thickness is not a line.
  GrayImage img(100, 60);
  for (int y = 10; y < 18; ++y)
    for (int x = 5; x < 95; ++x) img.at(x, y) = 72;
  EXPECT_EQ(detect_ruling_lines(img).count(), 0u);

  GrayImage narrow(100, 60);
  for (int y = 10; y < 18; ++y)
    for (int x = 5; x < 20; ++x) narrow.at(x, y) = 72;
  EXPECT_EQ(detect_ruling_lines(narrow).count(), 0u);
}

TEST(DetectRulingLines, ParamsValidated) {
  LineDetectParams p;
  p.min_run_fraction = 0.0;
  EXPECT_THROW(detect_ruling_lines(GrayImage(4, 4), p), InvalidArgument);
  p = {};
  p.max_thickness = 0;
  EXPECT_THROW(detect_ruling_lines(GrayImage(4, 4), p), InvalidArgument);
}

TEST(DetectRulingLines, MatchesGeneratorMasks) {
  const auto tables = generate_dataset(busy_params(), 50, 99);
  std::size_t lines = 0, lines_hit = 0, text = 0, text_hit = 0;
  for (const auto& t : tables) {
    const BitMask m = detect_ruling_lines(t.image);
    lines += t.page.line_mask->count();
    lines_hit += m.overlap(*t.page.line_mask);
    text += t.page.text_mask->count();
    text_hit += m.overlap(*t.page.text_mask);
  }
  ASSERT_GT(lines, 0u);
  ASSERT_GT(text, 0u);
  EXPECT_GE(static_cast<double>(lines_hit) / lines, 0.99);
  EXPECT_LT(static_cast<double>(text_hit) / text, 0.005);
}

TEST(RemoveLines, OnlyTouchesMaskedPixels) {
  const auto t = generate_table(busy_params(), 5);
  const BitMask m = detect_ruling_lines(t.image);
  const GrayImage out = remove_lines(t.image);
  for (int y = 0; y < t.image.height(); ++y)
    for (int x = 0; x < t.image.width(); ++x) {
      if (m.test(x, y))
        EXPECT_EQ(out.at(x, y), 255);
      else
        EXPECT_EQ(out.at(x, y), t.image.at(x, y));
    }
  EXPECT_EQ(remove_lines(t.image), out);
}

TEST(AddLines, SingleSeparator) {
  GrayImage img(100, 100);
  GridSpec g;
  g.row_separators = {45.0};
  const GrayImage out = add_lines(img, g, LineMode::horizontal);
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) EXPECT_EQ(out.at(x, y), y == 45 ? 0 : 255);
  // Vertical mode ignores row separators.
  EXPECT_EQ(add_lines(img, g, LineMode::vertical), img);
  g.line_width = 3;
  g.line_value = 20;
  EXPECT_EQ(dark_pixels(add_lines(img, g, LineMode::both)), 300u);
  EXPECT_EQ(add_lines(img, g, LineMode::both).at(0, 47), 20);
}

TEST(AddLines, RespectsExtent) {
  GrayImage img(50, 50);
  GridSpec g;
  g.row_separators = {10.5};
  g.col_separators = {30.2};
  g.x_min = 5;
  g.x_max = 40;
  g.y_min = 2;
  g.y_max = 20;
  const GrayImage out = add_lines(img, g, LineMode::both);
  EXPECT_EQ(out.at(4, 10), 255);
  EXPECT_EQ(out.at(5, 10), 0);
  EXPECT_EQ(out.at(39, 10), 0);
  EXPECT_EQ(out.at(40, 10), 255);
  EXPECT_EQ(out.at(30, 1), 255);
  EXPECT_EQ(out.at(30, 2), 0);
  EXPECT_EQ(out.at(30, 19), 0);
  EXPECT_EQ(out.at(30, 20), 255);
  EXPECT_EQ(dark_pixels(out), 35u + 18u - 1u);
}

TEST(AddLines, RejectsBadGrids) {
  GrayImage img(20, 20);
  GridSpec g;
  g.row_separators = {25.0};
  EXPECT_THROW(add_lines(img, g, LineMode::horizontal), ValidationError);
  g.row_separators = {5.0, 5.0};
  EXPECT_THROW(add_lines(img, g, LineMode::horizontal), ValidationError);
  g.row_separators = {5.0};
  g.line_width = 0;
  EXPECT_THROW(add_lines(img, g, LineMode::horizontal), ValidationError);
}

TEST(GridFromCells, RegularGrid) {
  // Cells 50x20, gap 10: row boundary 20..30, column boundary 50..60.
  const auto page = page_of(grid_cells(2, 3), 200, 100);
  const GridSpec g = grid_from_cells(page);
  EXPECT_EQ(g.row_separators, std::vector<double>{25.0});
  EXPECT_EQ(g.col_separators, (std::vector<double>{55.0, 115.0}));
  EXPECT_EQ(*g.x_min, 0.0);
  EXPECT_EQ(*g.x_max, 170.0);
  EXPECT_EQ(*g.y_max, 50.0);
}

TEST(GridFromCells, SingleCellAndSpans) {
  EXPECT_TRUE(grid_from_cells(page_of(grid_cells(1, 1), 60, 30)).row_separators.empty());

  // Top row spans both columns; bottom row has two cells.
  std::vector<Cell> cells{{0, BBox(0, 0, 110, 20), {0, 0, 0, 1}, std::nullopt},
                          {1, BBox(0, 30, 50, 50), {1, 1, 0, 0}, std::nullopt},
                          {2, BBox(60, 30, 110, 50), {1, 1, 1, 1}, std::nullopt}};
  const GridSpec g = grid_from_cells(page_of(cells, 120, 60));
  EXPECT_EQ(g.row_separators, std::vector<double>{25.0});
  EXPECT_EQ(g.col_separators, std::vector<double>{55.0});

  // Both rows span: the column boundary is never exposed.
  cells[1] = {1, BBox(0, 30, 110, 50), {1, 1, 0, 1}, std::nullopt};
  cells.pop_back();
  EXPECT_TRUE(grid_from_cells(page_of(cells, 120, 60)).col_separators.empty());
}

TEST(GridFromCells, InconsistentGridThrows) {
  std::vector<Cell> cells{{0, BBox(0, 0, 50, 30), {0, 0, 0, 0}, std::nullopt},
                          {1, BBox(0, 20, 50, 50), {1, 1, 0, 0}, std::nullopt}};
  EXPECT_THROW(grid_from_cells(page_of(cells, 60, 60)), ValidationError);
}

TEST(AddLines, OneBandPerSeparatorOnTables) {
  const auto page = page_of(grid_cells(2, 2), 120, 60);
  const GrayImage blank(120, 60);
  EXPECT_EQ(augment(blank, page_of(grid_cells(1, 1), 60, 30), Augmentation::hvlt), blank);
  const GrayImage h = augment(blank, page, Augmentation::hlt);
  const GrayImage v = augment(blank, page, Augmentation::vlt);
  const GrayImage hv = augment(blank, page, Augmentation::hvlt);
  EXPECT_EQ(dark_pixels(h), 110u);   // row 25, x in [0,110)
  EXPECT_EQ(dark_pixels(v), 50u);    // column 55, y in [0,50)
  EXPECT_EQ(dark_pixels(hv), 159u);  // shared crossing pixel
  for (int x = 0; x < 110; ++x) EXPECT_EQ(h.at(x, 25), 0);
}

TEST(AddThenRemove, RecoversLineFreeImage) {
  SynthParams p = busy_params();
  p.draw_lines = false;
  const auto tables = generate_dataset(p, 30, 4);
  std::size_t total = 0, same = 0, changed = 0, restored = 0;
  for (const auto& t : tables) {
    const GrayImage lined = augment(t.image, t.page, Augmentation::hvlt);
    const GrayImage back = remove_lines(lined);
    for (int y = 0; y < t.image.height(); ++y)
      for (int x = 0; x < t.image.width(); ++x) {
        ++total;
        same += back.at(x, y) == t.image.at(x, y);
        if (lined.at(x, y) == t.image.at(x, y)) continue;
        ++changed;
        restored += back.at(x, y) == t.image.at(x, y);
      }
  }
  ASSERT_GT(changed, 0u);
  EXPECT_GE(static_cast<double>(same) / total, 0.99);
  EXPECT_GE(static_cast<double>(restored) / changed, 0.9);
}

TEST(AddThenRemove, RestoresEveryAddedPixelWithoutSpans) {
  SynthParams p = busy_params();
  p.draw_lines = false;
  p.span_prob = 0.0;
  for (const auto& t : generate_dataset(p, 10, 4)) {
    EXPECT_EQ(remove_lines(augment(t.image, t.page, Augmentation::hvlt)), t.image);
  }
}

TEST(MaskIntensity, Examples) {
  GrayImage img(3, 1, std::vector<std::uint8_t>{100, 150, 90});
  const GrayImage m2 = mask_intensity(img, 2.0);
  EXPECT_EQ(m2.at(0, 0), 200);
  EXPECT_EQ(m2.at(1, 0), 255);
  EXPECT_EQ(mask_intensity(img, 3.0).at(2, 0), 255);
  EXPECT_EQ(mask_intensity(img, 1.0), img);
  EXPECT_EQ(mask_intensity(GrayImage(3, 1, std::vector<std::uint8_t>{0, 0, 0}), 3.0).at(1, 0), 0);
  EXPECT_EQ(mask_intensity(GrayImage(1, 1, std::vector<std::uint8_t>{3}), 1.5).at(0, 0), 5);  // 4.5 rounds up
  EXPECT_THROW(mask_intensity(img, 0.5), InvalidArgument);
  EXPECT_THROW(mask_intensity(img, 2.0, MaskScope::per_cell), InvalidArgument);
}

TEST(MaskIntensity, MonotoneInFactorAndOrderPreserving) {
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> px(256);
  for (auto& v : px) v = static_cast<std::uint8_t>(rng());
  const GrayImage img(16, 16, px);
  const double factors[] = {1.0, 1.3, 2.0, 2.5, 3.0};
  for (std::size_t f = 1; f < std::size(factors); ++f) {
    const GrayImage lo = mask_intensity(img, factors[f - 1]), hi = mask_intensity(img, factors[f]);
    for (std::size_t i = 0; i < px.size(); ++i) EXPECT_LE(lo.pixels()[i], hi.pixels()[i]);
  }
  const GrayImage m = mask_intensity(img, 2.0);
  for (std::size_t i = 0; i < px.size(); ++i)
    for (std::size_t j = 0; j < px.size(); ++j)
      if (px[i] <= px[j]) {
        EXPECT_LE(m.pixels()[i], m.pixels()[j]);
      }
}

TEST(MaskIntensity, PerCellLeavesOutsideUntouched) {
  GrayImage img(10, 10, 100);
  std::vector<Cell> cells{{0, BBox(2, 2, 4.5, 4), {0, 0, 0, 0}, std::nullopt}};
  const GrayImage out = mask_intensity(img, 2.0, MaskScope::per_cell, cells);
  std::size_t masked = 0;
  for (auto v : out.pixels()) masked += v == 200;
  EXPECT_EQ(masked, 3u * 2u);
  EXPECT_EQ(out.at(4, 3), 200);
  EXPECT_EQ(out.at(5, 3), 100);
  EXPECT_EQ(out.at(2, 4), 100);
}

TEST(Augment, NamesAndDeterminism) {
  EXPECT_EQ(parse_augmentation("NLT"), Augmentation::nlt);
  EXPECT_EQ(parse_augmentation("original"), Augmentation::none);
  EXPECT_EQ(parse_augmentation("HLT+VLT"), Augmentation::hvlt);
  EXPECT_THROW(parse_augmentation("blur"), InvalidArgument);
  for (auto a : {Augmentation::none, Augmentation::nlt, Augmentation::hlt, Augmentation::vlt, Augmentation::hvlt,
                 Augmentation::mask2, Augmentation::mask3})
    EXPECT_EQ(parse_augmentation(augmentation_name(a)), a);

  const auto t = generate_table(busy_params(), 12);
  for (auto a : {Augmentation::nlt, Augmentation::hvlt, Augmentation::mask3}) {
    const GrayImage x = augment(t.image, t.page, a);
    EXPECT_EQ(x, augment(t.image, t.page, a));
    EXPECT_EQ(x.width(), t.image.width());
    EXPECT_EQ(x.height(), t.image.height());
  }
}
