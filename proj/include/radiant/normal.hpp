#pragma once

namespace radiant {

/// Standard normal CDF, computed through erfc so both tails keep relative accuracy.
double normal_cdf(double x);

/// Standard normal quantile for p in (0, 1); Acklam's rational approximation
/// polished by one Halley step against normal_cdf.
double normal_quantile(double p);

/// gamma = 1 - Phi(Gamma), evaluated as Phi(-Gamma).
inline double tolerance_from_gamma_factor(double gamma_factor)
{
    return normal_cdf(-gamma_factor);
}

/// Above this gamma factor 1 - gamma rounds to 1 in double precision for
/// practical purposes and Monte Carlo coverage checks carry no information.
inline constexpr double coverage_saturation_gamma_factor = 8.0;

} // namespace radiant
