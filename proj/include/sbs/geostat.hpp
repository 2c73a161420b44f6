#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "sbs/core.hpp"

namespace sbs::geostat {

struct SamplePoint {
    Cell cell;
    double value = 0.0;

    bool operator==(const SamplePoint&) const = default;
};

/// One entry per distinct cell (mean of its readings), ordered by first
/// appearance in the log.
std::vector<SamplePoint> dedupe_measurements(const MeasurementLog& log);

struct VariogramBin {
    double lag = 0.0;  // mean pair distance within the bin
    double semivariance = 0.0;
    std::size_t pair_count = 0;
};

/// Matheron estimator on `n_bins` equal-width bins over (0, max pair
/// distance]. Empty bins are omitted. Distances are metres (spec.cell_size_m).
std::vector<VariogramBin> empirical_variogram(const std::vector<SamplePoint>& points, const GridSpec& spec,
                                              int n_bins);

struct VariogramModel {
    double nugget = 0.0;
    double sill = 1.0;  // total sill
    double range_m = 1.0;

    /// Spherical semivariance; gamma(0) == 0.
    double gamma(double h) const noexcept;
    /// sill - gamma(h)
    double covariance(double h) const noexcept;
};

inline constexpr double kMinSill = 1e-6;

/// Least-squares spherical fit, pair-count weighted. Returns nullopt when
/// fewer than 3 bins are available (caller falls back to fallback_model).
std::optional<VariogramModel> fit_spherical(const std::vector<VariogramBin>& bins);

/// nugget 0, sill = variance of the values (floored at kMinSill), range a
/// quarter of the grid diagonal.
VariogramModel fallback_model(const std::vector<SamplePoint>& points, const GridSpec& spec);

struct ReconstructedMap {
    GridMap estimate;
    GridMap uncertainty;
    std::size_t n_measurements_used = 0;
    bool burn_in = false;
};

inline constexpr std::size_t kMinKrigingPoints = 3;
inline constexpr double kDiagonalJitter = 1e-10;

/// Ordinary kriging of every free cell. Blocked cells get a NaN estimate and
/// the largest free-cell variance. Requires >= kMinKrigingPoints distinct
/// points; throws ValidationError otherwise and NumericalError if the system
/// cannot be factorised.
ReconstructedMap krige(const std::vector<SamplePoint>& points, const VariogramModel& model, const GridSpec& spec,
                       const ObstacleMask& mask);

/// Ordinary kriging weights and Lagrange multiplier at one target cell,
/// solved from the semivariance system. Used for diagnostics and tests.
struct KrigingWeights {
    std::vector<double> lambda;
    double mu = 0.0;
};
KrigingWeights kriging_weights(const std::vector<SamplePoint>& points, const VariogramModel& model,
                               const GridSpec& spec, Cell target);

/// Estimate = mean of readings (0 if none); uncertainty = 1 on unsampled cells
/// and 0 on sampled ones.
ReconstructedMap burn_in_surrogate(const MeasurementLog& log, const GridSpec& spec, const ObstacleMask& mask);

/// Stateful reconstruction used by the episode loop and the field server:
/// refits the variogram once per `refit_every` new distinct points and
/// re-solves the kriging system on every call.
class Reconstructor {
public:
    Reconstructor(GridSpec spec, ObstacleMask mask, int n_bins = 15, std::size_t refit_every = 10);

    ReconstructedMap reconstruct(const MeasurementLog& log);

    const std::optional<VariogramModel>& model() const noexcept { return model_; }

private:
    GridSpec spec_;
    ObstacleMask mask_;
    int n_bins_;
    std::size_t refit_every_;
    std::optional<VariogramModel> model_;
    std::size_t fitted_at_ = 0;
};

}  // namespace sbs::geostat
