#include "sbs/geostat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace sbs::geostat {

std::vector<SamplePoint> dedupe_measurements(const MeasurementLog& log) {
    struct Acc {
        std::size_t slot;
        double sum;
        std::size_t count;
    };
    std::unordered_map<long long, Acc> seen;
    std::vector<Cell> order;
    for (const auto& m : log.entries()) {
        const long long key = (static_cast<long long>(m.cell.row) << 32) ^ static_cast<unsigned>(m.cell.col);
        auto [it, inserted] = seen.try_emplace(key, Acc{order.size(), 0.0, 0});
        if (inserted) order.push_back(m.cell);
        it->second.sum += m.value;
        ++it->second.count;
    }
    std::vector<SamplePoint> out(order.size());
    for (const auto& [key, acc] : seen) {
        out[acc.slot] = SamplePoint{order[acc.slot], acc.sum / static_cast<double>(acc.count)};
    }
    return out;
}

std::vector<VariogramBin> empirical_variogram(const std::vector<SamplePoint>& points, const GridSpec& spec,
                                              int n_bins) {
    if (points.size() < 2) throw ValidationError("empirical variogram needs at least 2 points");
    if (n_bins < 1) throw ValidationError("n_bins must be positive");
    double max_dist = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            max_dist = std::max(max_dist, cell_distance(spec, points[i].cell, points[j].cell));
        }
    }
    if (!(max_dist > 0.0)) throw ValidationError("empirical variogram needs at least 2 distinct locations");

    const double width = max_dist / n_bins;
    std::vector<double> sum_sq(n_bins, 0.0);
    std::vector<double> sum_lag(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            const double h = cell_distance(spec, points[i].cell, points[j].cell);
            if (h <= 0.0) continue;
            // Bins are (k*w, (k+1)*w]; the ceil keeps the upper edge inclusive.
            // Grid distances often sit exactly on an edge, so rounding noise
            // is absorbed into the lower bin.
            int b = static_cast<int>(std::ceil(h / width * (1.0 - 1e-12))) - 1;
            b = std::clamp(b, 0, n_bins - 1);
            const double d = points[i].value - points[j].value;
            sum_sq[b] += d * d;
            sum_lag[b] += h;
            ++count[b];
        }
    }
    std::vector<VariogramBin> bins;
    for (int b = 0; b < n_bins; ++b) {
        if (count[b] == 0) continue;
        const double n = static_cast<double>(count[b]);
        bins.push_back({sum_lag[b] / n, sum_sq[b] / (2.0 * n), count[b]});
    }
    return bins;
}

double VariogramModel::gamma(double h) const noexcept {
    if (h <= 0.0) return 0.0;
    if (h >= range_m) return sill;
    const double x = h / range_m;
    return nugget + (sill - nugget) * (1.5 * x - 0.5 * x * x * x);
}

double VariogramModel::covariance(double h) const noexcept { return sill - gamma(h); }

namespace {

double spherical_shape(double h, double range) {
    if (h >= range) return 1.0;
    const double x = h / range;
    return 1.5 * x - 0.5 * x * x * x;
}

struct LinearFit {
    double nugget;
    double psill;
    double ssr;
};

// Weighted least squares of g ~ nugget + psill * shape(h; range) with both
// coefficients constrained non-negative.
LinearFit fit_at_range(const std::vector<VariogramBin>& bins, double range) {
    double sw = 0, sf = 0, sg = 0, sff = 0, sfg = 0;
    for (const auto& b : bins) {
        const double w = static_cast<double>(b.pair_count);
        const double f = spherical_shape(b.lag, range);
        sw += w;
        sf += w * f;
        sg += w * b.semivariance;
        sff += w * f * f;
        sfg += w * f * b.semivariance;
    }
    auto ssr_of = [&](double c0, double c1) {
        double s = 0;
        for (const auto& b : bins) {
            const double r = b.semivariance - c0 - c1 * spherical_shape(b.lag, range);
            s += static_cast<double>(b.pair_count) * r * r;
        }
        return s;
    };
    const double det = sw * sff - sf * sf;
    double nugget = 0.0;
    double psill = 0.0;
    if (std::abs(det) > 1e-14 * sw * sff) {
        nugget = (sff * sg - sf * sfg) / det;
        psill = (sw * sfg - sf * sg) / det;
    }
    if (nugget < 0.0 || std::abs(det) <= 1e-14 * sw * sff) {
        nugget = 0.0;
        psill = sff > 0 ? std::max(0.0, sfg / sff) : 0.0;
    }
    if (psill < 0.0) {
        psill = 0.0;
        nugget = std::max(0.0, sg / sw);
    }
    return {nugget, psill, ssr_of(nugget, psill)};
}

}  // namespace

std::optional<VariogramModel> fit_spherical(const std::vector<VariogramBin>& bins) {
    if (bins.size() < 3) return std::nullopt;
    double max_lag = 0.0;
    double min_lag = std::numeric_limits<double>::infinity();
    for (const auto& b : bins) {
        max_lag = std::max(max_lag, b.lag);
        min_lag = std::min(min_lag, b.lag);
    }
    const double lo = std::max(min_lag * 0.5, 1e-9);
    const double hi = max_lag * 2.0;

    // Coarse log-spaced scan over the range, then golden-section refinement
    // around the best bracket.
    constexpr int kScan = 120;
    const double log_lo = std::log(lo);
    const double log_hi = std::log(hi);
    int best = 0;
    double best_ssr = std::numeric_limits<double>::infinity();
    std::vector<double> grid(kScan + 1);
    for (int i = 0; i <= kScan; ++i) {
        grid[i] = std::exp(log_lo + (log_hi - log_lo) * i / kScan);
        const double ssr = fit_at_range(bins, grid[i]).ssr;
        if (ssr < best_ssr) {
            best_ssr = ssr;
            best = i;
        }
    }
    double a = grid[std::max(best - 1, 0)];
    double b = grid[std::min(best + 1, kScan)];
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - phi * (b - a);
    double x2 = a + phi * (b - a);
    double f1 = fit_at_range(bins, x1).ssr;
    double f2 = fit_at_range(bins, x2).ssr;
    for (int it = 0; it < 80 && (b - a) > 1e-10 * b; ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = fit_at_range(bins, x1).ssr;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = fit_at_range(bins, x2).ssr;
        }
    }
    double range = 0.5 * (a + b);
    LinearFit fit = fit_at_range(bins, range);
    if (best_ssr < fit.ssr) {
        range = grid[best];
        fit = fit_at_range(bins, range);
    }

    VariogramModel model;
    model.nugget = fit.nugget;
    model.sill = std::max(fit.nugget + fit.psill, fit.nugget + kMinSill);
    model.range_m = range;
    return model;
}

VariogramModel fallback_model(const std::vector<SamplePoint>& points, const GridSpec& spec) {
    double mean = 0.0;
    for (const auto& p : points) mean += p.value;
    if (!points.empty()) mean /= static_cast<double>(points.size());
    double var = 0.0;
    for (const auto& p : points) var += (p.value - mean) * (p.value - mean);
    if (!points.empty()) var /= static_cast<double>(points.size());
    return VariogramModel{0.0, std::max(var, kMinSill), 0.25 * spec.diagonal_m()};
}

namespace {

Eigen::MatrixXd point_covariance(const std::vector<SamplePoint>& points, const VariogramModel& model,
                                 const GridSpec& spec) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        cov(i, i) = model.sill + kDiagonalJitter;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double c = model.covariance(cell_distance(spec, points[i].cell, points[j].cell));
            cov(i, j) = c;
            cov(j, i) = c;
        }
    }
    return cov;
}

}  // namespace

ReconstructedMap krige(const std::vector<SamplePoint>& points, const VariogramModel& model, const GridSpec& spec,
                       const ObstacleMask& mask) {
    if (points.size() < kMinKrigingPoints) {
        throw ValidationError("kriging needs at least " + std::to_string(kMinKrigingPoints) + " distinct points");
    }
    const auto n = static_cast<Eigen::Index>(points.size());

    // Covariance form of the ordinary-kriging system: with C = L L^T,
    //   u = C^-1 1, s = 1'u, m = u'v / s
    //   estimate(x) = m + c(x)' C^-1 (v - m 1)
    //   variance(x) = sill - c'C^-1 c + (1 - u'c)^2 / s
    const Eigen::LLT<Eigen::MatrixXd> llt(point_covariance(points, model, spec));
    if (llt.info() != Eigen::Success) {
        throw NumericalError("kriging covariance matrix is not positive definite (n=" + std::to_string(n) + ")");
    }
    const auto lower = llt.matrixL();

    Eigen::VectorXd values(n);
    for (Eigen::Index i = 0; i < n; ++i) values(i) = points[i].value;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd z = lower.solve(ones);
    const double s = z.squaredNorm();
    const Eigen::VectorXd u = llt.solve(ones);
    const double mean = u.dot(values) / s;
    const Eigen::VectorXd y = lower.solve((values.array() - mean).matrix());
    if (!std::isfinite(s) || !(s > 0.0) || !y.allFinite()) {
        throw NumericalError("kriging system is numerically singular");
    }

    ReconstructedMap out{GridMap(spec, MapKind::estimate, std::numeric_limits<double>::quiet_NaN()),
                         GridMap(spec, MapKind::uncertainty, 0.0), points.size(), false};

    std::vector<std::size_t> free_cells;
    free_cells.reserve(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (mask.free(i)) free_cells.push_back(i);
    }

    constexpr std::size_t kChunk = 256;
    Eigen::MatrixXd rhs(n, static_cast<Eigen::Index>(kChunk));
    double max_var = 0.0;
    for (std::size_t start = 0; start < free_cells.size(); start += kChunk) {
        const auto m = static_cast<Eigen::Index>(std::min(kChunk, free_cells.size() - start));
        for (Eigen::Index k = 0; k < m; ++k) {
            const Cell target = cell_at(spec, free_cells[start + k]);
            for (Eigen::Index i = 0; i < n; ++i) {
                rhs(i, k) = model.covariance(cell_distance(spec, points[i].cell, target));
            }
        }
        auto block = rhs.leftCols(m);
        lower.solveInPlace(block);
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto w = block.col(k);
            const double zc = z.dot(w);
            const double est = mean + y.dot(w);
            double var = model.sill - w.squaredNorm() + (1.0 - zc) * (1.0 - zc) / s;
            var = std::max(var, 0.0);
            const std::size_t idx = free_cells[start + k];
            out.estimate[idx] = est;
            out.uncertainty[idx] = var;
            max_var = std::max(max_var, var);
        }
    }
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (mask.blocked(i)) out.uncertainty[i] = max_var;
    }
    return out;
}

KrigingWeights kriging_weights(const std::vector<SamplePoint>& points, const VariogramModel& model,
                               const GridSpec& spec, Cell target) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 1, n + 1);
    Eigen::VectorXd b(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            a(i, j) = model.gamma(cell_distance(spec, points[i].cell, points[j].cell));
        }
        a(i, i) -= kDiagonalJitter;
        a(i, n) = 1.0;
        a(n, i) = 1.0;
        b(i) = model.gamma(cell_distance(spec, points[i].cell, target));
    }
    b(n) = 1.0;
    const Eigen::VectorXd x = a.fullPivLu().solve(b);
    KrigingWeights out;
    out.lambda.assign(x.data(), x.data() + n);
    out.mu = x(n);
    return out;
}

ReconstructedMap burn_in_surrogate(const MeasurementLog& log, const GridSpec& spec, const ObstacleMask& mask) {
    double mean = 0.0;
    for (const auto& m : log.entries()) mean += m.value;
    if (!log.empty()) mean /= static_cast<double>(log.size());
    ReconstructedMap out{GridMap(spec, MapKind::estimate, mean), GridMap(spec, MapKind::uncertainty, 1.0), log.size(),
                         true};
    // Sampled cells are known exactly; without this a lone agent can shuttle
    // between two cells forever and never leave burn-in.
    for (const auto& m : log.entries()) out.uncertainty.at(m.cell) = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (mask.blocked(i)) out.estimate[i] = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

Reconstructor::Reconstructor(GridSpec spec, ObstacleMask mask, int n_bins, std::size_t refit_every)
    : spec_(spec), mask_(std::move(mask)), n_bins_(n_bins), refit_every_(refit_every) {}

ReconstructedMap Reconstructor::reconstruct(const MeasurementLog& log) {
    const auto points = dedupe_measurements(log);
    if (points.size() < kMinKrigingPoints) return burn_in_surrogate(log, spec_, mask_);

    if (!model_ || points.size() >= fitted_at_ + refit_every_) {
        auto fitted = fit_spherical(empirical_variogram(points, spec_, n_bins_));
        if (fitted) {
            model_ = *fitted;
            fitted_at_ = points.size();
        } else {
            // Fallback is not cached; the next call retries the fit.
            return krige(points, fallback_model(points, spec_), spec_, mask_);
        }
    }
    return krige(points, *model_, spec_, mask_);
}

}  // namespace sbs::geostat
