#include "concord/quadrature.hpp"

#include <array>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <vector>

namespace concord {

namespace {

// Kronrod abscissae on [0, 1]; odd indices are the embedded Gauss nodes.
constexpr std::array<double, 8> kXgk{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double a;
    double b;
    double value;
    double error;

    bool operator<(const Segment& other) const { return error < other.error; }
};

Segment gauss_kronrod(const std::function<double(double)>& f, double a, double b) {
    const double centre = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(centre);
    double kronrod = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * kXgk[j];
        const double pair = f(centre - dx) + f(centre + dx);
        kronrod += kWgk[j] * pair;
        if (j % 2 == 1) {
            gauss += kWg[j / 2] * pair;
        }
    }
    return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

} // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureOptions& options) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw std::invalid_argument("integrate: limits must be finite");
    }
    if (a == b) {
        return {0.0, 0.0, 0, true};
    }
    std::priority_queue<Segment> work;
    work.push(gauss_kronrod(f, a, b));
    double total = work.top().value;
    double error = work.top().error;
    int evaluations = 15;

    auto tolerance = [&] { return std::max(options.abs_tol, options.rel_tol * std::abs(total)); };

    while (error > tolerance() && static_cast<int>(work.size()) < options.max_intervals) {
        const Segment worst = work.top();
        work.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (mid <= worst.a || mid >= worst.b) {
            work.push(worst); // interval cannot be split further
            break;
        }
        const Segment left = gauss_kronrod(f, worst.a, mid);
        const Segment right = gauss_kronrod(f, mid, worst.b);
        evaluations += 30;
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        work.push(left);
        work.push(right);
    }

    // Re-sum from scratch so the running updates do not leave rounding drift.
    double value = 0.0;
    double err = 0.0;
    while (!work.empty()) {
        value += work.top().value;
        err += work.top().error;
        work.pop();
    }
    return {value, err, evaluations, err <= std::max(options.abs_tol, options.rel_tol * std::abs(value))};
}

QuadratureResult integrate_to_infinity(const std::function<double(double)>& f, double a,
                                       double scale, const QuadratureOptions& options) {
    if (!(scale > 0.0)) {
        throw std::invalid_argument("integrate_to_infinity: scale must be positive");
    }
    auto mapped = [&](double s) {
        const double one_minus = 1.0 - s;
        const double t = a + scale * s / one_minus;
        if (!std::isfinite(t)) return 0.0;
        const double value = f(t) * scale / (one_minus * one_minus);
        return std::isfinite(value) ? value : 0.0;
    };
    return integrate(mapped, 0.0, 1.0, options);
}

} // namespace concord
