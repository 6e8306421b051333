#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fieldsync/field_model.hpp"
#include "fieldsync/geo_analytics.hpp"

namespace fieldsync::view {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

// ---------------------------------------------------------------------------
// Color

struct LabToRgb {
  Rgb rgb;
  bool clamped = false;  // the Lab value was outside the sRGB gamut
};

// sRGB companding, D65 white (0.95047, 1.0, 1.08883), CIE L*a*b*.
Lab srgb_to_lab(Rgb rgb);
LabToRgb lab_to_srgb(Lab lab);
double delta_e(Lab a, Lab b);

inline constexpr Rgb kColdBlue{0.020, 0.443, 0.690};
inline constexpr Rgb kHotRed{0.792, 0.000, 0.125};

/// Diverging colormap interpolated linearly in Lab between two sRGB
/// endpoints. t = 0 and t = 1 return the endpoints exactly.
struct Colormap {
  Rgb low = kColdBlue;
  Rgb high = kHotRed;

  Lab lab_at(double t) const;
  Rgb at(double t) const;
};

// Maps `value` from [lo, hi] (clamped) onto the red-blue temperature map.
Rgb temp_color(double value, double lo, double hi, const Colormap& map = {});

// ---------------------------------------------------------------------------
// Wedges

/// Screen rectangle [0,width] x [0,height].
struct Viewport {
  double width = 1.0;
  double height = 1.0;

  void validate() const;
  bool contains(Vec2 p) const { return p.x >= 0 && p.x <= width && p.y >= 0 && p.y <= height; }
  bool strictly_contains(Vec2 p) const { return p.x > 0 && p.x < width && p.y > 0 && p.y < height; }
};

struct WedgeParams {
  double intrusion_fraction = 0.1;  // of min(width, height)
  double aperture_factor = 1.5;
  double rotate_step_deg = 1.0;
  double max_rotate_deg = 90.0;
  double degenerate_factor = 10.0;  // of max(width, height)
};

struct WedgeGeom {
  Vec2 apex;
  Vec2 base_left;
  Vec2 base_right;
  double leg_length = 0.0;
  double half_aperture = 0.0;
  Rgb color;
};

struct OnScreen {};

// Throws Degenerate when the target is farther than
// degenerate_factor * max(width, height) from the viewport.
std::variant<WedgeGeom, OnScreen> wedge(Vec2 target, const Viewport& viewport, const Rgb& color = {},
                                        const WedgeParams& params = {});

// ---------------------------------------------------------------------------
// Peripheral HUD

struct ViewerPose {
  geo::LocalPoint position;
  double heading = 0.0;  // radians, 0 = grid north, clockwise
  double fov = 1.0471975511965976;

  void validate() const;
};

// Wraps into (-pi, pi].
double normalize_angle(double radians);

enum class Side { kLeft, kRight };
std::string_view to_string(Side side);

struct HudParams {
  std::string field;
  double lo = 0.0;
  double hi = 1.0;
  double alpha_range_m = 500.0;
  Colormap colormap;
};

struct HudMark {
  Side side = Side::kLeft;
  double vertical_pos = 0.0;
  double alpha = 1.0;
  Rgb color;
  RecordId source_id;
};

struct InView {};

// Signed bearing of the sensor relative to the viewer heading, (-pi, pi].
double relative_bearing(const geo::LocalPoint& sensor, const ViewerPose& viewer);

// Throws MissingValue when the record lacks a numeric `params.field`.
std::variant<HudMark, InView> hud_project(const Record& sensor, const ViewerPose& viewer,
                                          const geo::GridSpec& grid, const HudParams& params);

// ---------------------------------------------------------------------------
// Render plan

struct RenderPlanOptions {
  Viewport viewport{100.0, 100.0};
  double meters_per_unit = 1.0;
  HudParams hud;
  WedgeParams wedge;
};

struct PlannedWedge {
  RecordId source_id;
  WedgeGeom geom;
};

struct RenderPlan {
  ViewerPose viewer;
  Viewport viewport;
  std::vector<PlannedWedge> wedges;
  std::vector<HudMark> hud_marks;
  std::vector<RecordId> skipped;  // records without a colormapped value
};

// North-up overhead screen centred on the viewer: records that fall off the
// viewport get wedges, records outside the field of view get HUD marks.
RenderPlan build_render_plan(std::span<const Record> records, const ViewerPose& viewer,
                             const geo::GridSpec& grid, const RenderPlanOptions& options);

nlohmann::json render_plan_to_json(const RenderPlan& plan);

}  // namespace fieldsync::view
