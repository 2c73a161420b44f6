#pragma once

#include "sbs/core.hpp"

namespace sbs::server {

inline constexpr double kEarthRadiusM = 6371000.0;

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool operator==(const GeoPoint&) const = default;
};

struct LocalPoint {
    double north_m = 0.0;
    double east_m = 0.0;
};

struct OutOfFieldError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Equirectangular projection about `origin`, which sits on the corner of
/// cell (0,0); rows grow northward and columns eastward.
class FieldFrame {
public:
    FieldFrame(GeoPoint origin, GridSpec spec);

    LocalPoint to_local(GeoPoint p) const noexcept;
    GeoPoint to_geo(LocalPoint p) const noexcept;

    /// Throws OutOfFieldError when the point lies more than one cell outside
    /// the field; points inside the tolerance band are clamped to the grid.
    Cell to_cell(GeoPoint p) const;
    Cell to_cell(LocalPoint p) const;

    LocalPoint cell_center_local(Cell c) const noexcept;
    GeoPoint cell_center(Cell c) const noexcept;

    const GeoPoint& origin() const noexcept { return origin_; }
    const GridSpec& spec() const noexcept { return spec_; }

private:
    GeoPoint origin_;
    GridSpec spec_;
    double metres_per_deg_lat_;
    double metres_per_deg_lon_;
};

/// Compass bearing in [0, 360) from `from` to `to`; 0 = north, clockwise.
double bearing_deg(LocalPoint from, LocalPoint to) noexcept;

}  // namespace sbs::server
