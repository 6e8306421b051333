#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fieldsync/field_model.hpp"

namespace fieldsync::geo {

inline constexpr double kMetersPerDegree = 111320.0;
inline constexpr double kMaxExtentMeters = 20000.0;

/// Stratified-sampling grid anchored at its southwest corner.
struct GridSpec {
  double origin_lat = 0.0;
  double origin_lon = 0.0;
  double cell_size_m = 10.0;
  int rows = 1;
  int cols = 1;
  int target_per_cell = 1;

  double width_m() const { return cols * cell_size_m; }
  double height_m() const { return rows * cell_size_m; }

  // Throws ConfigError on any violated invariant (including the 20 km
  // extent bound).
  void validate() const;
};

GridSpec grid_from_json(const nlohmann::json& doc);
nlohmann::json grid_to_json(const GridSpec& grid);

struct LocalPoint {
  double x_m = 0.0;
  double y_m = 0.0;
};

// Equirectangular projection around the grid origin.
LocalPoint local_project(double lat, double lon, const GridSpec& grid);
GeoPoint local_unproject(LocalPoint p, const GridSpec& grid);

struct CellIndex {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

// nullopt means OutOfBounds. Cells are half-open: the far edges belong to
// no cell.
std::optional<CellIndex> cell_of(LocalPoint p, const GridSpec& grid);
std::optional<CellIndex> cell_of(const Record& record, const GridSpec& grid);

struct CellCounts {
  int rows = 0;
  int cols = 0;
  std::vector<std::size_t> counts;  // row-major
  std::size_t out_of_bounds = 0;

  std::size_t at(int row, int col) const { return counts[static_cast<std::size_t>(row * cols + col)]; }
  std::size_t total() const;
};

CellCounts coverage(std::span<const Record> records, const GridSpec& grid);

std::vector<CellIndex> missing_cells(const CellCounts& counts);

struct CellDeficit {
  CellIndex cell;
  std::size_t deficit = 0;
};
std::vector<CellDeficit> under_sampled_cells(const CellCounts& counts, const GridSpec& grid);

// Newest first; equal timestamps ordered by canonical id text ascending.
std::vector<Record> cell_history(std::span<const Record> records, CellIndex cell, const GridSpec& grid);

struct AnomalyParams {
  std::string field;
  double z_threshold = 3.0;
};

struct Anomaly {
  RecordId id;
  double robust_z = 0.0;
};

inline constexpr double kMadConsistency = 1.4826;

// Robust z of each record against its cell and the 8 neighbouring cells;
// returns the flagged records in input order. Throws UnknownField /
// NonNumericField when `params.field` is not a numeric schema field.
std::vector<Anomaly> detect_anomalies(std::span<const Record> records, const GridSpec& grid,
                                      const Schema& schema, const AnomalyParams& params);

// count / max(count), or all zeros when the grid is empty. Row-major.
std::vector<std::vector<double>> heatmap_bins(const CellCounts& counts);

// Report forms used by the CLI and the web console.
nlohmann::json coverage_to_json(const CellCounts& counts, const GridSpec& grid);
std::string coverage_to_text(const CellCounts& counts, const GridSpec& grid);
nlohmann::json missing_to_json(const std::vector<CellIndex>& cells);
std::string missing_to_text(const std::vector<CellIndex>& cells);
nlohmann::json anomalies_to_json(const std::vector<Anomaly>& anomalies);
std::string anomalies_to_text(const std::vector<Anomaly>& anomalies);

}  // namespace fieldsync::geo
