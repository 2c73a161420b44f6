#include "sbs/envgen.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <random>

#include <fftw3.h>

namespace sbs::envgen {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

GridMap generate_fbf(const FbfParams& params) {
    if (!(params.hurst > 0.0 && params.hurst < 1.0)) throw ValidationError("hurst must lie in (0,1)");
    const GridSpec& spec = params.spec;
    if (spec.rows < 2 || spec.cols < 2) throw ValidationError("invalid grid spec");

    // Synthesise on a padded periodic square and crop, so the torus wrap-around
    // does not flatten increments across the cropped window.
    const int n = next_pow2(2 * std::max(spec.rows, spec.cols));
    const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);

    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    fftw_complex* buf = fftw_alloc_complex(total);
    const double exponent = -(params.hurst + 1.0);
    for (int u = 0; u < n; ++u) {
        const double ku = static_cast<double>(u <= n / 2 ? u : u - n);
        for (int v = 0; v < n; ++v) {
            const double kv = static_cast<double>(v <= n / 2 ? v : v - n);
            const std::size_t i = static_cast<std::size_t>(u) * n + v;
            const double a = gauss(rng);
            const double b = gauss(rng);
            if (u == 0 && v == 0) {
                buf[i][0] = 0.0;
                buf[i][1] = 0.0;
                continue;
            }
            const double amp = std::pow(ku * ku + kv * kv, 0.5 * exponent);
            buf[i][0] = amp * a;
            buf[i][1] = amp * b;
        }
    }

    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_2d(n, n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }

    std::vector<double> values(spec.size());
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            values[static_cast<std::size_t>(r) * spec.cols + c] = buf[static_cast<std::size_t>(r) * n + c][0];
        }
    }
    fftw_free(buf);

    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) throw NumericalError("degenerate fractional Brownian field; retry with a different seed");
    for (double& v : values) v = (v - lo) / (hi - lo);
    // Pin the extremes exactly; the division can leave the max at 1 - ulp.
    values[static_cast<std::size_t>(lo_it - values.begin())] = 0.0;
    values[static_cast<std::size_t>(hi_it - values.begin())] = 1.0;
    return GridMap(spec, MapKind::truth, std::move(values));
}

void validate(const SCurveParams& params) {
    if (!(params.threshold_value > 0.0 && params.threshold_value < 1.0)) {
        throw ValidationError("threshold_value must lie strictly inside (0,1)");
    }
    if (!(params.curve_power > 0.0) || !std::isfinite(params.curve_power)) {
        throw ValidationError("curve_power must be finite and positive");
    }
}

double scurve(double x, const SCurveParams& params) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("scurve input must lie in [0,1]");
    validate(params);
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double t = params.threshold_value;
    const double k = params.curve_power;
    // Written as 1 / (1 + ratio^k) so large k saturates instead of overflowing.
    const double ratio = (t * (1.0 - x)) / ((1.0 - t) * x);
    if (ratio == 1.0) return 0.5;
    return 1.0 / (1.0 + std::pow(ratio, k));
}

GridMap apply_scurve(const GridMap& map, const SCurveParams& params) {
    validate(params);
    GridMap out = map;
    for (double& v : out.values()) v = scurve(v, params);
    return out;
}

std::string_view to_string(Layout layout) noexcept {
    switch (layout) {
        case Layout::none: return "none";
        case Layout::edge_reaching_bars: return "edge-reaching-bars";
        case Layout::interior_blocks: return "interior-blocks";
        case Layout::scattered: return "scattered";
    }
    return "none";
}

Layout layout_from_string(std::string_view name) {
    for (Layout l : all_layouts()) {
        if (to_string(l) == name) return l;
    }
    throw ValidationError("unknown obstacle layout '" + std::string(name) + "'");
}

const std::vector<Layout>& all_layouts() {
    static const std::vector<Layout> layouts{Layout::none, Layout::edge_reaching_bars, Layout::interior_blocks,
                                             Layout::scattered};
    return layouts;
}

int free_components(const ObstacleMask& mask) {
    const GridSpec& spec = mask.spec();
    std::vector<int> label(spec.size(), -1);
    int components = 0;
    std::vector<Cell> stack;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (!mask.free(i) || label[i] >= 0) continue;
        stack.push_back(cell_at(spec, i));
        label[i] = components;
        while (!stack.empty()) {
            const Cell c = stack.back();
            stack.pop_back();
            for (const auto& nb : neighbors8(spec, mask, c)) {
                const std::size_t j = cell_index(spec, nb.cell);
                if (label[j] < 0) {
                    label[j] = components;
                    stack.push_back(nb.cell);
                }
            }
        }
        ++components;
    }
    return components;
}

namespace {

void fill_rect(std::vector<bool>& blocked, const GridSpec& spec, int r0, int c0, int r1, int c1) {
    r0 = std::clamp(r0, 0, spec.rows);
    r1 = std::clamp(r1, 0, spec.rows);
    c0 = std::clamp(c0, 0, spec.cols);
    c1 = std::clamp(c1, 0, spec.cols);
    for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) blocked[static_cast<std::size_t>(r) * spec.cols + c] = true;
    }
}

}  // namespace

ObstacleMask obstacle_layout(Layout layout, const GridSpec& spec) {
    std::vector<bool> blocked(spec.size(), false);
    const int rows = spec.rows;
    const int cols = spec.cols;
    const int bar = std::max(1, cols / 25);

    switch (layout) {
        case Layout::none:
            break;
        case Layout::edge_reaching_bars: {
            // Two walls anchored on opposite edges, each spanning 60% of the height.
            const int reach = (rows * 3) / 5;
            const int c1 = cols / 3;
            const int c2 = (2 * cols) / 3;
            fill_rect(blocked, spec, 0, c1, reach, c1 + bar);
            fill_rect(blocked, spec, rows - reach, c2, rows, c2 + bar);
            break;
        }
        case Layout::interior_blocks: {
            const int h = std::max(1, rows / 6);
            const int w = std::max(1, cols / 6);
            for (int qr : {1, 3}) {
                for (int qc : {1, 3}) {
                    const int rc = (qr * rows) / 4;
                    const int cc = (qc * cols) / 4;
                    fill_rect(blocked, spec, rc - h / 2, cc - w / 2, rc - h / 2 + h, cc - w / 2 + w);
                }
            }
            break;
        }
        case Layout::scattered: {
            const int step = std::max(4, std::min(rows, cols) / 7);
            const int size = std::max(1, step / 3);
            int k = 0;
            for (int r = step / 2; r + size < rows - 1; r += step) {
                for (int c = step / 2 + ((k % 2) ? step / 2 : 0); c + size < cols - 1; c += step) {
                    fill_rect(blocked, spec, r, c, r + size, c + size);
                }
                ++k;
            }
            break;
        }
    }

    ObstacleMask mask(spec, std::move(blocked));
    if (free_components(mask) != 1) {
        throw ValidationError("obstacle layout '" + std::string(to_string(layout)) +
                              "' disconnects free space on a " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " grid");
    }
    return mask;
}

}  // namespace sbs::envgen
