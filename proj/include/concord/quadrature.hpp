#pragma once

#include <functional>

namespace concord {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int evaluations = 0;
    bool converged = false;
};

struct QuadratureOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-14;
    int max_intervals = 4000;
};

/// Globally adaptive 15-point Gauss-Kronrod integration over [a, b].
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureOptions& options = {});

/// Integral over [a, ∞) using the map t = a + scale·s/(1-s), s in [0, 1).
/// `scale` sets where the bulk of the integrand is expected to sit.
QuadratureResult integrate_to_infinity(const std::function<double(double)>& f, double a,
                                       double scale, const QuadratureOptions& options = {});

} // namespace concord
