#include "sbs/server/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sbs::server {

FieldFrame::FieldFrame(GeoPoint origin, GridSpec spec)
    : origin_(origin),
      spec_(spec),
      metres_per_deg_lat_(kEarthRadiusM * std::numbers::pi / 180.0),
      metres_per_deg_lon_(kEarthRadiusM * std::cos(origin.lat * std::numbers::pi / 180.0) * std::numbers::pi / 180.0) {
    if (!(std::abs(origin.lat) < 89.0)) throw ValidationError("origin latitude must be within (-89, 89) degrees");
}

LocalPoint FieldFrame::to_local(GeoPoint p) const noexcept {
    return {(p.lat - origin_.lat) * metres_per_deg_lat_, (p.lon - origin_.lon) * metres_per_deg_lon_};
}

GeoPoint FieldFrame::to_geo(LocalPoint p) const noexcept {
    return {origin_.lat + p.north_m / metres_per_deg_lat_, origin_.lon + p.east_m / metres_per_deg_lon_};
}

Cell FieldFrame::to_cell(LocalPoint p) const {
    const double cell = spec_.cell_size_m;
    const double ns = spec_.rows * cell;
    const double ew = spec_.cols * cell;
    if (!std::isfinite(p.north_m) || !std::isfinite(p.east_m) || p.north_m < -cell || p.north_m >= ns + cell ||
        p.east_m < -cell || p.east_m >= ew + cell) {
        throw OutOfFieldError("position is outside the field");
    }
    const int row = static_cast<int>(std::floor(p.north_m / cell));
    const int col = static_cast<int>(std::floor(p.east_m / cell));
    return Cell{std::clamp(row, 0, spec_.rows - 1), std::clamp(col, 0, spec_.cols - 1)};
}

Cell FieldFrame::to_cell(GeoPoint p) const { return to_cell(to_local(p)); }

LocalPoint FieldFrame::cell_center_local(Cell c) const noexcept {
    return {(c.row + 0.5) * spec_.cell_size_m, (c.col + 0.5) * spec_.cell_size_m};
}

GeoPoint FieldFrame::cell_center(Cell c) const noexcept { return to_geo(cell_center_local(c)); }

double bearing_deg(LocalPoint from, LocalPoint to) noexcept {
    double deg = std::atan2(to.east_m - from.east_m, to.north_m - from.north_m) * 180.0 / std::numbers::pi;
    if (deg < 0.0) deg += 360.0;
    if (deg >= 360.0) deg -= 360.0;
    return deg;
}

}  // namespace sbs::server
