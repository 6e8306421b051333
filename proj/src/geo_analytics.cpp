#include "fieldsync/geo_analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

namespace fieldsync::geo {

using nlohmann::json;

namespace {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string cell_text(CellIndex c) { return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")"; }

}  // namespace

void GridSpec::validate() const {
  if (!std::isfinite(origin_lat) || origin_lat < -90.0 || origin_lat > 90.0) {
    throw Error(ErrorCode::kConfigError, "origin_lat", "must be in [-90, 90]");
  }
  if (!std::isfinite(origin_lon) || origin_lon < -180.0 || origin_lon > 180.0) {
    throw Error(ErrorCode::kConfigError, "origin_lon", "must be in [-180, 180]");
  }
  if (!(cell_size_m > 0.0) || !std::isfinite(cell_size_m)) throw Error(ErrorCode::kConfigError, "cell_size_m", "must be > 0");
  if (rows < 1) throw Error(ErrorCode::kConfigError, "rows", "must be >= 1");
  if (cols < 1) throw Error(ErrorCode::kConfigError, "cols", "must be >= 1");
  if (target_per_cell < 1) throw Error(ErrorCode::kConfigError, "target_per_cell", "must be >= 1");
  if (width_m() > kMaxExtentMeters || height_m() > kMaxExtentMeters) {
    throw Error(ErrorCode::kConfigError, "grid", "extent exceeds 20 km per side");
  }
}

GridSpec grid_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfigError, "grid", "expected object");
  GridSpec g;
  try {
    g.origin_lat = doc.at("origin_lat").get<double>();
    g.origin_lon = doc.at("origin_lon").get<double>();
    g.cell_size_m = doc.at("cell_size_m").get<double>();
    g.rows = doc.at("rows").get<int>();
    g.cols = doc.at("cols").get<int>();
    g.target_per_cell = doc.value("target_per_cell", 1);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, "grid", e.what());
  }
  g.validate();
  return g;
}

json grid_to_json(const GridSpec& g) {
  return {{"origin_lat", g.origin_lat}, {"origin_lon", g.origin_lon}, {"cell_size_m", g.cell_size_m},
          {"rows", g.rows},             {"cols", g.cols},             {"target_per_cell", g.target_per_cell}};
}

LocalPoint local_project(double lat, double lon, const GridSpec& grid) {
  return {(lon - grid.origin_lon) * kMetersPerDegree * std::cos(deg2rad(grid.origin_lat)),
          (lat - grid.origin_lat) * kMetersPerDegree};
}

GeoPoint local_unproject(LocalPoint p, const GridSpec& grid) {
  return {grid.origin_lat + p.y_m / kMetersPerDegree,
          grid.origin_lon + p.x_m / (kMetersPerDegree * std::cos(deg2rad(grid.origin_lat)))};
}

std::optional<CellIndex> cell_of(LocalPoint p, const GridSpec& grid) {
  if (!std::isfinite(p.x_m) || !std::isfinite(p.y_m)) return std::nullopt;
  const double row = std::floor(p.y_m / grid.cell_size_m);
  const double col = std::floor(p.x_m / grid.cell_size_m);
  if (row < 0 || col < 0 || row >= grid.rows || col >= grid.cols) return std::nullopt;
  return CellIndex{static_cast<int>(row), static_cast<int>(col)};
}

std::optional<CellIndex> cell_of(const Record& record, const GridSpec& grid) {
  return cell_of(local_project(record.lat(), record.lon(), grid), grid);
}

std::size_t CellCounts::total() const {
  std::size_t sum = out_of_bounds;
  for (std::size_t c : counts) sum += c;
  return sum;
}

CellCounts coverage(std::span<const Record> records, const GridSpec& grid) {
  CellCounts out;
  out.rows = grid.rows;
  out.cols = grid.cols;
  out.counts.assign(static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols), 0);
  for (const Record& r : records) {
    if (auto cell = cell_of(r, grid)) {
      ++out.counts[static_cast<std::size_t>(cell->row * grid.cols + cell->col)];
    } else {
      ++out.out_of_bounds;
    }
  }
  return out;
}

std::vector<CellIndex> missing_cells(const CellCounts& counts) {
  std::vector<CellIndex> out;
  for (int r = 0; r < counts.rows; ++r) {
    for (int c = 0; c < counts.cols; ++c) {
      if (counts.at(r, c) == 0) out.push_back({r, c});
    }
  }
  return out;
}

std::vector<CellDeficit> under_sampled_cells(const CellCounts& counts, const GridSpec& grid) {
  std::vector<CellDeficit> out;
  const auto target = static_cast<std::size_t>(grid.target_per_cell);
  for (int r = 0; r < counts.rows; ++r) {
    for (int c = 0; c < counts.cols; ++c) {
      const std::size_t n = counts.at(r, c);
      if (n < target) out.push_back({{r, c}, target - n});
    }
  }
  return out;
}

std::vector<Record> cell_history(std::span<const Record> records, CellIndex cell, const GridSpec& grid) {
  std::vector<Record> out;
  for (const Record& r : records) {
    auto c = cell_of(r, grid);
    if (c && *c == cell) out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const Record& a, const Record& b) {
    if (a.timestamp() != b.timestamp()) return a.timestamp() > b.timestamp();
    return a.id().canonical() < b.id().canonical();
  });
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return (lower + upper) / 2.0;
}

}  // namespace

std::vector<Anomaly> detect_anomalies(std::span<const Record> records, const GridSpec& grid, const Schema& schema,
                                      const AnomalyParams& params) {
  const FieldSpec* spec = schema.find(params.field);
  if (spec == nullptr) throw Error(ErrorCode::kUnknownField, params.field);
  if (spec->kind != FieldKind::kNumeric) throw Error(ErrorCode::kNonNumericField, params.field);
  if (!(params.z_threshold > 0.0)) throw Error(ErrorCode::kOutOfRange, "z_threshold", "must be > 0");

  struct Sample {
    std::size_t index;
    CellIndex cell;
    double value;
  };
  std::vector<Sample> samples;
  std::map<CellIndex, std::vector<double>> by_cell;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto v = records[i].numeric(params.field);
    if (!v) continue;
    auto cell = cell_of(records[i], grid);
    if (!cell) continue;
    samples.push_back({i, *cell, *v});
    by_cell[*cell].push_back(*v);
  }

  std::vector<Anomaly> out;
  std::vector<double> hood;
  for (const Sample& s : samples) {
    hood.clear();
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        auto it = by_cell.find({s.cell.row + dr, s.cell.col + dc});
        if (it != by_cell.end()) hood.insert(hood.end(), it->second.begin(), it->second.end());
      }
    }
    const double med = median_of(hood);
    std::vector<double> dev(hood.size());
    double dev_sum = 0.0;
    for (std::size_t i = 0; i < hood.size(); ++i) {
      dev[i] = std::fabs(hood[i] - med);
      dev_sum += dev[i];
    }
    double spread = median_of(dev);
    if (spread == 0.0) spread = dev_sum / static_cast<double>(dev.size());
    if (spread == 0.0) continue;
    const double z = std::fabs(s.value - med) / (kMadConsistency * spread);
    if (z > params.z_threshold) out.push_back({records[s.index].id(), z});
  }
  return out;
}

std::vector<std::vector<double>> heatmap_bins(const CellCounts& counts) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(counts.rows),
                                       std::vector<double>(static_cast<std::size_t>(counts.cols), 0.0));
  const std::size_t max = counts.counts.empty() ? 0 : *std::max_element(counts.counts.begin(), counts.counts.end());
  if (max == 0) return out;
  for (int r = 0; r < counts.rows; ++r) {
    for (int c = 0; c < counts.cols; ++c) {
      out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
          static_cast<double>(counts.at(r, c)) / static_cast<double>(max);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

json coverage_to_json(const CellCounts& counts, const GridSpec& grid) {
  json matrix = json::array();
  for (int r = 0; r < counts.rows; ++r) {
    json row = json::array();
    for (int c = 0; c < counts.cols; ++c) row.push_back(counts.at(r, c));
    matrix.push_back(std::move(row));
  }
  json deficits = json::array();
  for (const auto& d : under_sampled_cells(counts, grid)) {
    deficits.push_back({{"row", d.cell.row}, {"col", d.cell.col}, {"deficit", d.deficit}});
  }
  return {{"grid", grid_to_json(grid)},
          {"counts", std::move(matrix)},
          {"out_of_bounds", counts.out_of_bounds},
          {"heatmap", heatmap_bins(counts)},
          {"under_sampled", std::move(deficits)}};
}

std::string coverage_to_text(const CellCounts& counts, const GridSpec& grid) {
  std::size_t width = 3;
  for (std::size_t n : counts.counts) width = std::max(width, std::to_string(n).size() + 1);
  for (int c = 0; c < counts.cols; ++c) width = std::max(width, std::to_string(c).size() + 2);

  std::ostringstream os;
  os << "grid " << counts.rows << "x" << counts.cols << ", cell " << fixed(grid.cell_size_m, 1) << " m, target "
     << grid.target_per_cell << "\n";
  const std::size_t label = std::max<std::size_t>(4, std::to_string(counts.rows - 1).size() + 1);
  os << pad_left("row", label);
  for (int c = 0; c < counts.cols; ++c) os << pad_left("c" + std::to_string(c), width);
  os << "\n";
  for (int r = 0; r < counts.rows; ++r) {
    os << pad_left("r" + std::to_string(r), label);
    for (int c = 0; c < counts.cols; ++c) os << pad_left(std::to_string(counts.at(r, c)), width);
    os << "\n";
  }
  os << "out_of_bounds " << counts.out_of_bounds << "\n";
  const auto deficits = under_sampled_cells(counts, grid);
  os << "under_sampled " << deficits.size() << "\n";
  return os.str();
}

json missing_to_json(const std::vector<CellIndex>& cells) {
  json out = json::array();
  for (const auto& c : cells) out.push_back({{"row", c.row}, {"col", c.col}});
  return {{"missing", std::move(out)}};
}

std::string missing_to_text(const std::vector<CellIndex>& cells) {
  std::ostringstream os;
  os << "missing " << cells.size() << "\n";
  for (const auto& c : cells) os << cell_text(c) << "\n";
  return os.str();
}

json anomalies_to_json(const std::vector<Anomaly>& anomalies) {
  json out = json::array();
  for (const auto& a : anomalies) out.push_back({{"id", a.id.canonical()}, {"robust_z", a.robust_z}});
  return {{"anomalies", std::move(out)}};
}

std::string anomalies_to_text(const std::vector<Anomaly>& anomalies) {
  std::size_t width = 2;
  for (const auto& a : anomalies) width = std::max(width, a.id.canonical().size());
  std::ostringstream os;
  os << "anomalies " << anomalies.size() << "\n";
  for (const auto& a : anomalies) {
    const std::string id = a.id.canonical();
    os << id << std::string(width - id.size() + 2, ' ') << fixed(a.robust_z, 3) << "\n";
  }
  return os.str();
}

}  // namespace fieldsync::geo
