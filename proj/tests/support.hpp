#pragma once

// Synthetic data builders and independent numeric oracles for the tests.

#include "concord/comparison.hpp"
#include "concord/genesis.hpp"
#include "concord/measurement.hpp"
#include "concord/statfun.hpp"
#include "concord/tfit.hpp"

#include <cmath>
#include <stdexcept>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace testing {

using namespace concord;

/// Groups of `per` independent |t(nu, sigma)| values, weight 1 each.
inline SampleGroups t_pair_groups(double nu, double sigma, std::size_t groups, std::size_t per, RngSeed seed) {
    SampleGroups out(groups);
    const auto law = DistSpec::student_t(nu, sigma);
    for (std::size_t g = 0; g < groups; ++g) {
        Sampler s(derive_seed(seed, g));
        out[g].reserve(per);
        for (std::size_t i = 0; i < per; ++i) out[g].push_back({std::abs(s.draw(law)), 1.0});
    }
    return out;
}

/// Quantities whose measurements all carry uncertainty u, errors from `law`.
inline Dataset equal_u_dataset(const DistSpec& law, std::size_t quantities, std::size_t per, double u,
                               RngSeed seed) {
    SimSpec spec;
    spec.n_quantities = quantities;
    spec.measurements_per_quantity = {per, per};
    spec.error_law = law;
    spec.reported_u = {u, u, false};
    spec.true_value = {-10.0, 10.0};
    spec.seed = seed;
    return simulate_dataset(spec);
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Standard normal CDF from the C library erfc.
inline double phi_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Binomial CDF P(X <= k) by direct summation.
inline double binomial_cdf(int k, int n, double p) {
    if (k < 0) return 0.0;
    if (k >= n) return 1.0;
    double s = 0.0;
    for (int i = 0; i <= k; ++i) {
        const double logc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
        s += std::exp(logc + i * std::log(p) + (n - i) * std::log1p(-p));
    }
    return s;
}

/// Root of a monotone function on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi) {
    double flo = f(lo);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace testing
