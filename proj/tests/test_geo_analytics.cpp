#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fieldsync/geo_analytics.hpp"
#include "support.hpp"

using namespace fieldsync;
using namespace fieldsync::geo;
using testing::record_at;
using testing::scorch_record;

namespace {

GridSpec grid(int rows, int cols, double cell = 10.0, int target = 1) {
  GridSpec g;
  g.origin_lat = 40.0;
  g.origin_lon = -105.0;
  g.cell_size_m = cell;
  g.rows = rows;
  g.cols = cols;
  g.target_per_cell = target;
  return g;
}

const Schema& reading_schema() {
  static const Schema s = parse_schema(R"({"schema_id":"r","version":1,"fields":[
      {"name":"reading","kind":"numeric","required":true},
      {"name":"label","kind":"text","required":false}]})");
  return s;
}

Record reading_at(const GridSpec& g, const std::string& dev, std::uint64_t n, double x, double y, double v) {
  const GeoPoint p = local_unproject({x, y}, g);
  RecordDraft d;
  d.id = RecordId(dev, n);
  d.schema_id = "r";
  d.lat = p.lat;
  d.lon = p.lon;
  d.values["reading"] = v;
  return validate_record(reading_schema(), d);
}

// Independent recount: walk every cell rectangle and test membership.
struct Recount {
  std::vector<std::size_t> counts;
  std::size_t out = 0;
};

Recount brute_force(const std::vector<Record>& recs, const GridSpec& g) {
  Recount rc;
  rc.counts.assign(static_cast<std::size_t>(g.rows * g.cols), 0);
  const double kx = 111320.0 * std::cos(g.origin_lat * std::numbers::pi / 180.0);
  for (const Record& r : recs) {
    const double x = (r.lon() - g.origin_lon) * kx;
    const double y = (r.lat() - g.origin_lat) * 111320.0;
    bool placed = false;
    for (int row = 0; row < g.rows && !placed; ++row) {
      for (int col = 0; col < g.cols && !placed; ++col) {
        if (x >= col * g.cell_size_m && x < (col + 1) * g.cell_size_m && y >= row * g.cell_size_m &&
            y < (row + 1) * g.cell_size_m) {
          ++rc.counts[static_cast<std::size_t>(row * g.cols + col)];
          placed = true;
        }
      }
    }
    if (!placed) ++rc.out;
  }
  return rc;
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_NOTHROW(grid(5, 5).validate());
  CHECK_THROWS_AS(grid(0, 5).validate(), Error);
  CHECK_THROWS_AS(grid(5, 5, 0.0).validate(), Error);
  CHECK_THROWS_AS(grid(5, 5, 10.0, 0).validate(), Error);
  CHECK_THROWS_AS(grid(3, 2001, 10.0).validate(), Error);
  CHECK_NOTHROW(grid(2000, 2000, 10.0).validate());
  CHECK(grid_from_json(grid_to_json(grid(3, 4, 25.0, 2))).cols == 4);
}

TEST_CASE("local projection") {
  GridSpec g = grid(5, 5);
  const LocalPoint o = local_project(g.origin_lat, g.origin_lon, g);
  CHECK(o.x_m == 0.0);
  CHECK(o.y_m == 0.0);
  CHECK(local_project(g.origin_lat + 0.000090, g.origin_lon, g).y_m == doctest::Approx(10.0188).epsilon(1e-9));

  g.origin_lat = 60.0;
  CHECK(local_project(60.0, g.origin_lon + 0.001, g).x_m == doctest::Approx(55.66).epsilon(1e-4));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> off(-0.05, 0.05);
  GridSpec h = grid(5, 5);
  for (int i = 0; i < 200; ++i) {
    const double dlat1 = off(rng), dlon1 = off(rng), dlat2 = off(rng), dlon2 = off(rng);
    const LocalPoint a = local_project(h.origin_lat + dlat1, h.origin_lon + dlon1, h);
    const LocalPoint b = local_project(h.origin_lat + dlat2, h.origin_lon + dlon2, h);
    const LocalPoint ab = local_project(h.origin_lat + dlat1 + dlat2, h.origin_lon + dlon1 + dlon2, h);
    CHECK(ab.x_m == doctest::Approx(a.x_m + b.x_m).epsilon(1e-9));
    CHECK(ab.y_m == doctest::Approx(a.y_m + b.y_m).epsilon(1e-9));
    const GeoPoint back = local_unproject(a, h);
    CHECK(back.lat == doctest::Approx(h.origin_lat + dlat1).epsilon(1e-12));
    CHECK(back.lon == doctest::Approx(h.origin_lon + dlon1).epsilon(1e-12));
  }
}

TEST_CASE("cell assignment") {
  const GridSpec g = grid(5, 5);
  CHECK(cell_of(scorch_record("d", 0, 1, 40.0, -105.0), g) == CellIndex{0, 0});
  CHECK(cell_of(scorch_record("d", 0, 1, 40.0 + 0.000090, -105.0), g) == CellIndex{1, 0});
  CHECK_FALSE(cell_of(scorch_record("d", 0, 1, 40.0, -105.0001), g));
  CHECK_FALSE(cell_of(LocalPoint{50.0, 10.0}, g));
  CHECK_FALSE(cell_of(LocalPoint{10.0, 50.0}, g));
  CHECK(cell_of(LocalPoint{49.999, 49.999}, g) == CellIndex{4, 4});
}

TEST_CASE("coverage, missing and under-sampled examples") {
  const GridSpec g = grid(2, 2, 10.0, 3);
  CellCounts empty = coverage({}, g);
  CHECK(empty.total() == 0);
  CHECK(missing_cells(empty).size() == 4);
  const auto all_deficits = under_sampled_cells(empty, g);
  CHECK(all_deficits.size() == 4);
  CHECK(all_deficits[0].deficit == 3);
  CHECK(heatmap_bins(empty) == std::vector<std::vector<double>>{{0, 0}, {0, 0}});

  std::vector<Record> recs = {record_at(g, "d", 0, 1, 1), record_at(g, "d", 1, 2, 2), record_at(g, "d", 2, 3, 3)};
  CellCounts c = coverage(recs, g);
  CHECK(c.at(0, 0) == 3);
  CHECK(missing_cells(c) == std::vector<CellIndex>{{0, 1}, {1, 0}, {1, 1}});
  const auto deficits = under_sampled_cells(c, g);
  CHECK(deficits.size() == 3);
  CHECK(deficits[0].cell == CellIndex{0, 1});

  recs.pop_back();
  c = coverage(recs, g);
  CHECK(under_sampled_cells(c, g)[0].cell == CellIndex{0, 0});
  CHECK(under_sampled_cells(c, g)[0].deficit == 1);

  GridSpec one_row = grid(1, 3, 10.0, 1);
  std::vector<Record> hm;
  std::uint64_t n = 0;
  for (int col = 0; col < 3; ++col) {
    for (int k = 0; k < (1 << col); ++k) hm.push_back(record_at(one_row, "d", n++, col * 10 + 5, 5));
  }
  CHECK(heatmap_bins(coverage(hm, one_row)) == std::vector<std::vector<double>>{{0.25, 0.5, 1.0}});
  CHECK(missing_cells(coverage(hm, one_row)).empty());
}

TEST_CASE("property: coverage matches a brute-force recount") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const GridSpec g = grid(1 + static_cast<int>(rng() % 8), 1 + static_cast<int>(rng() % 8), 5.0 + static_cast<double>(rng() % 20),
                            1 + static_cast<int>(rng() % 3));
    std::uniform_real_distribution<double> x(-0.2 * g.width_m(), 1.2 * g.width_m());
    std::uniform_real_distribution<double> y(-0.2 * g.height_m(), 1.2 * g.height_m());
    std::vector<Record> recs;
    for (int i = 0; i < 50; ++i) recs.push_back(record_at(g, "d", static_cast<std::uint64_t>(i), x(rng), y(rng)));
    const CellCounts c = coverage(recs, g);
    const Recount oracle = brute_force(recs, g);
    CHECK(c.counts == oracle.counts);
    CHECK(c.out_of_bounds == oracle.out);
    CHECK(c.total() == recs.size());

    // Missing cells are the exact complement of covered cells.
    const auto missing = missing_cells(c);
    std::size_t covered = 0;
    for (std::size_t k : oracle.counts) covered += k > 0 ? 1 : 0;
    CHECK(missing.size() + covered == oracle.counts.size());
    for (const auto& m : missing) CHECK(oracle.counts[static_cast<std::size_t>(m.row * g.cols + m.col)] == 0);

    // Histories partition the in-bounds records.
    std::size_t in_histories = 0;
    for (int r = 0; r < g.rows; ++r) {
      for (int col = 0; col < g.cols; ++col) in_histories += cell_history(recs, {r, col}, g).size();
    }
    CHECK(in_histories + c.out_of_bounds == recs.size());
  }
}

TEST_CASE("cell history ordering") {
  const GridSpec g = grid(2, 2);
  const Record older = record_at(g, "a", 0, 1, 1, 10, 3600);
  const Record newer = record_at(g, "a", 1, 2, 2, 20, 7200);
  const Record b1 = record_at(g, "b", 1, 3, 3, 30, 100);
  const Record a1 = record_at(g, "a", 2, 3, 3, 40, 100);
  const Record elsewhere = record_at(g, "c", 0, 15, 15, 50, 9999);

  std::vector<Record> recs{older, newer, elsewhere};
  auto h = cell_history(recs, {0, 0}, g);
  REQUIRE(h.size() == 2);
  CHECK(h[0].id() == newer.id());
  CHECK(h[1].id() == older.id());

  std::vector<Record> tied{b1, a1};
  auto t = cell_history(tied, {0, 0}, g);
  REQUIRE(t.size() == 2);
  CHECK(t[0].id().canonical() == "a/2");
  CHECK(t[1].id().canonical() == "b/1");

  CHECK(cell_history(std::vector<Record>{elsewhere}, {0, 0}, g).empty());
}

TEST_CASE("anomaly examples") {
  const GridSpec g = grid(3, 3);
  std::vector<Record> recs;
  const double values[] = {10, 11, 9, 10, 95};
  for (std::uint64_t i = 0; i < 5; ++i) recs.push_back(reading_at(g, "d", i, 15, 15, values[i]));
  const auto found = detect_anomalies(recs, g, reading_schema(), {"reading", 3.0});
  REQUIRE(found.size() == 1);
  CHECK(found[0].id == recs[4].id());
  CHECK(found[0].robust_z == doctest::Approx(85.0 / 1.4826).epsilon(1e-12));
  CHECK(found[0].robust_z == doctest::Approx(57.33).epsilon(1e-3));

  std::vector<Record> same;
  for (std::uint64_t i = 0; i < 6; ++i) same.push_back(reading_at(g, "d", i, 5 + i, 5, 7.0));
  CHECK(detect_anomalies(same, g, reading_schema(), {"reading", 3.0}).empty());

  std::vector<Record> single{reading_at(g, "d", 0, 25, 25, 1000)};
  CHECK(detect_anomalies(single, g, reading_schema(), {"reading", 3.0}).empty());

  // Half the neighbourhood agrees exactly, so MAD is zero and the mean
  // absolute deviation takes over: values {5,5,5,5,5,9}, med 5, mean dev 4/6.
  std::vector<Record> mad_zero;
  const double mz[] = {5, 5, 5, 5, 5, 9};
  for (std::uint64_t i = 0; i < 6; ++i) mad_zero.push_back(reading_at(g, "d", i, 5, 5, mz[i]));
  const auto fallback = detect_anomalies(mad_zero, g, reading_schema(), {"reading", 3.0});
  REQUIRE(fallback.size() == 1);
  CHECK(fallback[0].robust_z == doctest::Approx(4.0 / (1.4826 * (4.0 / 6.0))).epsilon(1e-12));

  CHECK_THROWS_AS(detect_anomalies(recs, g, reading_schema(), {"nope", 3.0}), Error);
  try {
    detect_anomalies(recs, g, reading_schema(), {"label", 3.0});
    FAIL("expected NonNumericField");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonNumericField);
  }
}

TEST_CASE("anomaly neighbourhoods reach exactly one cell in each direction") {
  const GridSpec g = grid(1, 5);
  // A cluster at column 0 and a lone extreme value two columns away: the
  // extreme value never shares a neighbourhood with the cluster.
  std::vector<Record> recs;
  const double vals[] = {10, 11, 9, 10};
  for (std::uint64_t i = 0; i < 4; ++i) recs.push_back(reading_at(g, "d", i, 5, 5, vals[i]));
  recs.push_back(reading_at(g, "d", 9, 25, 5, 500));
  CHECK(detect_anomalies(recs, g, reading_schema(), {"reading", 3.0}).empty());

  // Move it next door and it is flagged.
  recs.back() = reading_at(g, "d", 9, 15, 5, 500);
  const auto found = detect_anomalies(recs, g, reading_schema(), {"reading", 3.0});
  REQUIRE(found.size() == 1);
  CHECK(found[0].id == RecordId("d", 9));
}

TEST_CASE("property: anomaly flags are scale-covariant") {
  std::mt19937_64 rng(8);
  const GridSpec g = grid(4, 4);
  std::uniform_real_distribution<double> pos(0.0, 40.0);
  std::normal_distribution<double> noise(50.0, 5.0);
  std::uniform_real_distribution<double> scale(0.01, 1000.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<LocalPoint, double>> pts;
    for (int i = 0; i < 60; ++i) pts.push_back({{pos(rng), pos(rng)}, rng() % 15 == 0 ? noise(rng) * 4 : noise(rng)});
    auto build = [&](double c) {
      std::vector<Record> recs;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        recs.push_back(reading_at(g, "d", i, pts[i].first.x_m, pts[i].first.y_m, pts[i].second * c));
      }
      return recs;
    };
    auto ids = [&](const std::vector<Anomaly>& as) {
      std::vector<RecordId> out;
      for (const auto& a : as) out.push_back(a.id);
      return out;
    };
    const auto base = ids(detect_anomalies(build(1.0), g, reading_schema(), {"reading", 3.0}));
    const double c = scale(rng);
    CHECK(ids(detect_anomalies(build(c), g, reading_schema(), {"reading", 3.0})) == base);
  }
}

TEST_CASE("report text forms") {
  const GridSpec g = grid(2, 2, 10.0, 2);
  std::vector<Record> recs{record_at(g, "d", 0, 1, 1), record_at(g, "d", 1, 11, 11), record_at(g, "d", 2, 11, 12),
                           record_at(g, "d", 3, -5, 1)};
  const CellCounts c = coverage(recs, g);
  CHECK(coverage_to_text(c, g) ==
        "grid 2x2, cell 10.0 m, target 2\n"
        " row c0 c1\n"
        "  r0  1  0\n"
        "  r1  0  2\n"
        "out_of_bounds 1\n"
        "under_sampled 3\n");
  CHECK(missing_to_text(missing_cells(c)) == "missing 2\n(0,1)\n(1,0)\n");
  const auto j = coverage_to_json(c, g);
  CHECK(j["counts"] == nlohmann::json::array({nlohmann::json::array({1, 0}), nlohmann::json::array({0, 2})}));
  CHECK(j["out_of_bounds"] == 1);
  CHECK(j["under_sampled"].size() == 3);
  CHECK(anomalies_to_text({{RecordId("d", 4), 57.3326}}) == "anomalies 1\nd/4  57.333\n");
}
