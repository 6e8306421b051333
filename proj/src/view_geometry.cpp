#include "fieldsync/view_geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace fieldsync::view {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// D65 reference white.
constexpr double kXn = 0.95047;
constexpr double kYn = 1.0;
constexpr double kZn = 1.08883;
constexpr double kDelta = 6.0 / 29.0;

using Mat3 = std::array<std::array<double, 3>, 3>;

constexpr Mat3 kRgbToXyz{{{0.4124564, 0.3575761, 0.1804375},
                          {0.2126729, 0.7151522, 0.0721750},
                          {0.0193339, 0.1191920, 0.9503041}}};

Mat3 invert(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

const Mat3& xyz_to_rgb() {
  static const Mat3 inv = invert(kRgbToXyz);
  return inv;
}

std::array<double, 3> mul(const Mat3& m, const std::array<double, 3>& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

double decode(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double encode(double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}
double lab_f_inv(double t) { return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0); }

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {v.x * c - v.y * s, v.x * s + v.y * c};
}

Vec2 clamp_to(Vec2 p, double x0, double y0, double x1, double y1) {
  return {std::clamp(p.x, x0, x1), std::clamp(p.y, y0, y1)};
}

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
json rgb_json(const Rgb& c) { return json::array({c.r, c.g, c.b}); }

}  // namespace

// ---------------------------------------------------------------------------
// Color

Lab srgb_to_lab(Rgb rgb) {
  const auto xyz = mul(kRgbToXyz, {decode(rgb.r), decode(rgb.g), decode(rgb.b)});
  const double fx = lab_f(xyz[0] / kXn);
  const double fy = lab_f(xyz[1] / kYn);
  const double fz = lab_f(xyz[2] / kZn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

LabToRgb lab_to_srgb(Lab lab) {
  const double fy = (lab.l + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const auto lin = mul(xyz_to_rgb(), {kXn * lab_f_inv(fx), kYn * lab_f_inv(fy), kZn * lab_f_inv(fz)});
  LabToRgb out;
  std::array<double, 3> c{};
  for (int i = 0; i < 3; ++i) {
    const double v = encode(std::max(lin[i], 0.0));
    // Tolerate rounding noise at the gamut boundary before flagging.
    if (lin[i] < -1e-12 || v > 1.0 + 1e-12) out.clamped = true;
    c[i] = std::clamp(v, 0.0, 1.0);
  }
  out.rgb = {c[0], c[1], c[2]};
  return out;
}

double delta_e(Lab a, Lab b) { return std::sqrt((a.l - b.l) * (a.l - b.l) + (a.a - b.a) * (a.a - b.a) + (a.b - b.b) * (a.b - b.b)); }

Lab Colormap::lab_at(double t) const {
  const Lab lo = srgb_to_lab(low);
  const Lab hi = srgb_to_lab(high);
  return {(1.0 - t) * lo.l + t * hi.l, (1.0 - t) * lo.a + t * hi.a, (1.0 - t) * lo.b + t * hi.b};
}

Rgb Colormap::at(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  if (t == 0.0) return low;
  if (t == 1.0) return high;
  return lab_to_srgb(lab_at(t)).rgb;
}

Rgb temp_color(double value, double lo, double hi, const Colormap& map) {
  if (!(lo < hi)) throw Error(ErrorCode::kOutOfRange, "value_range", "lo must be < hi");
  const double t = std::isnan(value) ? 0.0 : (value - lo) / (hi - lo);
  return map.at(t);
}

// ---------------------------------------------------------------------------
// Wedge

void Viewport::validate() const {
  if (!(width > 0.0) || !(height > 0.0)) throw Error(ErrorCode::kConfigError, "viewport", "width and height must be > 0");
}

std::variant<WedgeGeom, OnScreen> wedge(Vec2 target, const Viewport& viewport, const Rgb& color,
                                        const WedgeParams& params) {
  viewport.validate();
  if (viewport.contains(target)) return OnScreen{};

  const Vec2 nearest = clamp_to(target, 0.0, 0.0, viewport.width, viewport.height);
  const double d = norm(nearest - target);
  if (d > params.degenerate_factor * std::max(viewport.width, viewport.height)) {
    throw Error(ErrorCode::kDegenerate, "wedge", "target too far from the viewport");
  }
  const double min_side = std::min(viewport.width, viewport.height);
  const double intrusion = params.intrusion_fraction * min_side;
  const double spread = params.aperture_factor * intrusion;

  WedgeGeom g;
  g.apex = target;
  g.color = color;

  auto place = [&](Vec2 axis, double leg, double half_aperture) {
    g.leg_length = leg;
    g.half_aperture = half_aperture;
    g.base_left = target + leg * rotate(axis, half_aperture);
    g.base_right = target + leg * rotate(axis, -half_aperture);
    return viewport.strictly_contains(g.base_left) && viewport.strictly_contains(g.base_right);
  };

  const double leg = d + intrusion;
  const double half_aperture = std::atan(spread / leg);
  const Vec2 axis = (1.0 / d) * (nearest - target);
  const Vec2 to_center = Vec2{viewport.width / 2.0, viewport.height / 2.0} - target;
  const double direction = cross(axis, to_center) >= 0.0 ? 1.0 : -1.0;
  const double step = params.rotate_step_deg * std::numbers::pi / 180.0;
  const int steps = static_cast<int>(std::floor(params.max_rotate_deg / params.rotate_step_deg + 1e-9));
  for (int k = 0; k <= steps; ++k) {
    if (place(rotate(axis, direction * k * step), leg, half_aperture)) return g;
  }

  // Corner-region fallback: aim at the closest point of the viewport inset
  // by slightly more than the base half-width, so both base vertices land
  // within that margin of the aim point.
  const double margin = std::min(1.01 * spread, 0.49 * min_side);
  const Vec2 anchor = clamp_to(target, margin, margin, viewport.width - margin, viewport.height - margin);
  const double anchored_leg = norm(anchor - target);
  place((1.0 / anchored_leg) * (anchor - target), anchored_leg, std::atan(margin / 1.01 / anchored_leg));
  return g;
}

// ---------------------------------------------------------------------------
// HUD

void ViewerPose::validate() const {
  if (!(fov > 0.0 && fov < kPi)) throw Error(ErrorCode::kConfigError, "fov", "must be in (0, pi)");
  if (!std::isfinite(heading)) throw Error(ErrorCode::kConfigError, "heading", "must be finite");
}

double normalize_angle(double radians) {
  double a = std::fmod(radians, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

std::string_view to_string(Side side) { return side == Side::kLeft ? "LEFT" : "RIGHT"; }

double relative_bearing(const geo::LocalPoint& sensor, const ViewerPose& viewer) {
  const double dx = sensor.x_m - viewer.position.x_m;
  const double dy = sensor.y_m - viewer.position.y_m;
  return normalize_angle(std::atan2(dx, dy) - viewer.heading);
}

std::variant<HudMark, InView> hud_project(const Record& sensor, const ViewerPose& viewer, const geo::GridSpec& grid,
                                          const HudParams& params) {
  viewer.validate();
  auto value = sensor.numeric(params.field);
  if (!value) throw Error(ErrorCode::kMissingValue, params.field, sensor.id().canonical());

  const geo::LocalPoint p = geo::local_project(sensor.lat(), sensor.lon(), grid);
  const double dist = std::hypot(p.x_m - viewer.position.x_m, p.y_m - viewer.position.y_m);
  if (dist == 0.0) return InView{};
  const double beta = relative_bearing(p, viewer);
  const double half_fov = viewer.fov / 2.0;
  if (std::fabs(beta) <= half_fov) return InView{};

  HudMark mark;
  mark.side = beta < 0.0 ? Side::kLeft : Side::kRight;
  mark.vertical_pos = (std::fabs(beta) - half_fov) / (kPi - half_fov);
  mark.alpha = std::clamp(1.0 - dist / params.alpha_range_m, 0.1, 1.0);
  mark.color = temp_color(*value, params.lo, params.hi, params.colormap);
  mark.source_id = sensor.id();
  return mark;
}

// ---------------------------------------------------------------------------
// Render plan

RenderPlan build_render_plan(std::span<const Record> records, const ViewerPose& viewer, const geo::GridSpec& grid,
                             const RenderPlanOptions& options) {
  viewer.validate();
  options.viewport.validate();
  if (!(options.meters_per_unit > 0.0)) throw Error(ErrorCode::kConfigError, "scale", "must be > 0");

  RenderPlan plan;
  plan.viewer = viewer;
  plan.viewport = options.viewport;
  for (const Record& r : records) {
    auto value = r.numeric(options.hud.field);
    if (!value) {
      plan.skipped.push_back(r.id());
      continue;
    }
    const Rgb color = temp_color(*value, options.hud.lo, options.hud.hi, options.hud.colormap);
    const geo::LocalPoint p = geo::local_project(r.lat(), r.lon(), grid);
    const Vec2 screen{options.viewport.width / 2.0 + (p.x_m - viewer.position.x_m) / options.meters_per_unit,
                      options.viewport.height / 2.0 - (p.y_m - viewer.position.y_m) / options.meters_per_unit};
    try {
      const auto placed = wedge(screen, options.viewport, color, options.wedge);
      if (const auto* w = std::get_if<WedgeGeom>(&placed)) plan.wedges.push_back({r.id(), *w});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerate) throw;
    }
    const auto projected = hud_project(r, viewer, grid, options.hud);
    if (const auto* m = std::get_if<HudMark>(&projected)) plan.hud_marks.push_back(*m);
  }
  return plan;
}

json render_plan_to_json(const RenderPlan& plan) {
  json wedges = json::array();
  for (const auto& w : plan.wedges) {
    wedges.push_back({{"source_id", w.source_id.canonical()},
                      {"apex", vec_json(w.geom.apex)},
                      {"base_left", vec_json(w.geom.base_left)},
                      {"base_right", vec_json(w.geom.base_right)},
                      {"leg_length", w.geom.leg_length},
                      {"half_aperture", w.geom.half_aperture},
                      {"color", rgb_json(w.geom.color)}});
  }
  json marks = json::array();
  for (const auto& m : plan.hud_marks) {
    marks.push_back({{"source_id", m.source_id.canonical()},
                     {"side", std::string(to_string(m.side))},
                     {"vertical_pos", m.vertical_pos},
                     {"alpha", m.alpha},
                     {"color", rgb_json(m.color)}});
  }
  json skipped = json::array();
  for (const auto& id : plan.skipped) skipped.push_back(id.canonical());
  return {{"viewer",
           {{"x", plan.viewer.position.x_m},
            {"y", plan.viewer.position.y_m},
            {"heading", plan.viewer.heading},
            {"fov", plan.viewer.fov}}},
          {"viewport", {{"width", plan.viewport.width}, {"height", plan.viewport.height}}},
          {"wedges", std::move(wedges)},
          {"hud_marks", std::move(marks)},
          {"skipped", std::move(skipped)}};
}

}  // namespace fieldsync::view
