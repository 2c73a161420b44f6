#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sbs/core.hpp"

namespace sbs::envgen {

struct FbfParams {
    double hurst = 0.7;
    std::uint64_t seed = 0;
    GridSpec spec;
};

/// Fractional Brownian field by spectral synthesis, min-max normalised to
/// [0,1]. Deterministic for a fixed (seed, spec, hurst). Throws NumericalError
/// when the field comes out constant; retry with another seed.
GridMap generate_fbf(const FbfParams& params);

struct SCurveParams {
    double threshold_value = 0.5;  // input that maps to 0.5
    double curve_power = 1.0;      // larger -> more bimodal output
};

void validate(const SCurveParams& params);

/// x^k / (x^k + (t(1-x)/(1-t))^k). Throws DomainError for x outside [0,1].
double scurve(double x, const SCurveParams& params);

GridMap apply_scurve(const GridMap& map, const SCurveParams& params);

enum class Layout { none, edge_reaching_bars, interior_blocks, scattered };

std::string_view to_string(Layout layout) noexcept;
Layout layout_from_string(std::string_view name);
const std::vector<Layout>& all_layouts();

/// Canned obstacle arrangement scaled to `spec`. Throws ValidationError if
/// the result does not leave a single 8-connected free region.
ObstacleMask obstacle_layout(Layout layout, const GridSpec& spec);

/// Number of 8-connected components of free space (same no-corner-cut rule
/// as neighbors8).
int free_components(const ObstacleMask& mask);

}  // namespace sbs::envgen
