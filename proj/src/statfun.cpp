#include "concord/statfun.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace concord {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 200000;

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument(std::string(what) + " must be finite");
    }
}

// Series for P(a, x); valid and fast for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * kEps) {
            break;
        }
    }
    return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz); valid for x >= a + 1.
double gamma_q_fraction(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) {
            break;
        }
    }
    return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
}

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_fraction(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m < kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) {
            break;
        }
    }
    return h;
}

// I_x(a, b) where y = 1 - x is supplied separately so callers can keep
// precision when x is close to 1.
double beta_inc_xy(double a, double b, double x, double y) {
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double log_front = log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) +
                             b * std::log(y);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_fraction(b, a, y) / b;
}

// Two-sided tail P(|T| > t) of a standard Student-t with nu degrees of freedom.
double student_t_two_sided(double t, double nu) {
    if (t <= 0.0) return 1.0;
    const double t2 = t * t;
    const double x = nu / (nu + t2);
    const double y = t2 / (nu + t2);
    return beta_inc_xy(0.5 * nu, 0.5, x, y);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

double log_gamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw std::invalid_argument("log_gamma: argument must be positive and finite");
    }
    if (x < 0.5) {
        // Reflection keeps the Lanczos sum in its accurate range.
        return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - log_gamma(1.0 - x);
    }
    // Lanczos approximation, g = 671/128, 14 terms.
    static constexpr std::array<double, 14> cof{
        57.1562356658629235,     -59.5979603554754912,     14.1360979747417471,
        -0.491913816097620199,   .339946499848118887e-4,   .465236289270485756e-4,
        -.983744753048795646e-4, .158088703224912494e-3,   -.210264441724104883e-3,
        .217439618115212643e-3,  -.164318106536763890e-3,  .844182239838527433e-4,
        -.261908384015814087e-4, .368991826595316234e-5};
    double y = x;
    double tmp = x + 5.24218750000000000;
    tmp = (x + 0.5) * std::log(tmp) - tmp;
    double ser = 0.999999999999997092;
    for (double c : cof) {
        ser += c / ++y;
    }
    return tmp + std::log(2.5066282746310005 * ser / x);
}

double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0 || std::isnan(x)) {
        throw std::invalid_argument("gamma_p: need a > 0 and x >= 0");
    }
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_fraction(a, x);
}

double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0 || std::isnan(x)) {
        throw std::invalid_argument("gamma_q: need a > 0 and x >= 0");
    }
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_fraction(a, x);
}

double beta_inc(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
        throw std::invalid_argument("beta_inc: need a, b > 0 and x in [0, 1]");
    }
    return beta_inc_xy(a, b, x, 1.0 - x);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double chi2_cdf(double x, double nu) {
    if (std::isnan(x) || x < 0.0) {
        throw std::invalid_argument("chi2_cdf: x must be >= 0");
    }
    if (!(nu > 0.0) || !std::isfinite(nu)) {
        throw std::invalid_argument("chi2_cdf: nu must be positive");
    }
    return gamma_p(0.5 * nu, 0.5 * x);
}

std::string to_string(DistKind kind) {
    switch (kind) {
    case DistKind::normal: return "normal";
    case DistKind::cauchy: return "cauchy";
    case DistKind::student_t: return "student_t";
    case DistKind::exponential: return "exponential";
    }
    return "unknown";
}

DistKind dist_kind_from_string(const std::string& name) {
    if (name == "normal") return DistKind::normal;
    if (name == "cauchy") return DistKind::cauchy;
    if (name == "student_t" || name == "t") return DistKind::student_t;
    if (name == "exponential") return DistKind::exponential;
    throw std::invalid_argument("unknown distribution kind '" + name + "'");
}

void DistSpec::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("distribution scale sigma must be positive and finite");
    }
    if (kind == DistKind::student_t) {
        if (!(nu > 0.0) || !std::isfinite(nu)) {
            throw std::invalid_argument("student_t degrees of freedom nu must be positive");
        }
    }
}

double student_t_pdf(double z, double nu, double sigma) {
    require_finite(z, "z");
    if (!(nu > 0.0) || !std::isfinite(nu) || !(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("student_t_pdf: nu and sigma must be positive and finite");
    }
    const double u = z / sigma;
    const double log_norm = log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) -
                            0.5 * std::log(nu * std::numbers::pi) - std::log(sigma);
    return std::exp(log_norm - 0.5 * (nu + 1.0) * std::log1p(u * u / nu));
}

double pdf(const DistSpec& dist, double z) {
    dist.validate();
    require_finite(z, "z");
    const double u = z / dist.sigma;
    switch (dist.kind) {
    case DistKind::normal:
        return std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * dist.sigma);
    case DistKind::cauchy:
        return 1.0 / (std::numbers::pi * dist.sigma * (1.0 + u * u));
    case DistKind::student_t:
        return student_t_pdf(z, dist.nu, dist.sigma);
    case DistKind::exponential:
        return z < 0.0 ? 0.0 : std::exp(-u) / dist.sigma;
    }
    return 0.0;
}

double survival(const DistSpec& dist, double z) {
    dist.validate();
    if (std::isnan(z) || z < 0.0) {
        throw std::invalid_argument("survival: z must be >= 0");
    }
    if (std::isinf(z)) return 0.0;
    const double u = z / dist.sigma;
    switch (dist.kind) {
    case DistKind::normal:
        return std::erfc(u / std::numbers::sqrt2);
    case DistKind::cauchy:
        return u == 0.0 ? 1.0 : 2.0 / std::numbers::pi * std::atan(1.0 / u);
    case DistKind::student_t:
        return student_t_two_sided(u, dist.nu);
    case DistKind::exponential:
        return std::exp(-u);
    }
    return 0.0;
}

double inverse_survival(const DistSpec& dist, double p) {
    dist.validate();
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("inverse_survival: p must lie in (0, 1)");
    }
    switch (dist.kind) {
    case DistKind::cauchy:
        return dist.sigma / std::tan(0.5 * std::numbers::pi * p);
    case DistKind::exponential:
        return -dist.sigma * std::log(p);
    case DistKind::normal:
    case DistKind::student_t:
        break;
    }
    // Survival is strictly decreasing on [0, ∞); bracket then bisect.
    double lo = 0.0;
    double hi = dist.sigma;
    while (survival(dist, hi) > p) {
        lo = hi;
        hi *= 2.0;
        if (!std::isfinite(hi)) {
            throw std::runtime_error("inverse_survival: failed to bracket root");
        }
    }
    for (int i = 0; i < 400 && hi - lo > 2.0 * kEps * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (survival(dist, mid) > p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

RngSeed derive_seed(RngSeed base, std::uint64_t stream) {
    return RngSeed{splitmix64(base.value ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))};
}

double Sampler::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

std::size_t Sampler::uniform_index(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: empty range");
    }
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

double Sampler::standard_normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

double Sampler::chi_squared(double nu) {
    return std::gamma_distribution<double>(0.5 * nu, 2.0)(engine_);
}

double Sampler::draw(const DistSpec& dist) {
    switch (dist.kind) {
    case DistKind::normal:
        return dist.sigma * standard_normal();
    case DistKind::cauchy:
        return std::cauchy_distribution<double>(0.0, dist.sigma)(engine_);
    case DistKind::student_t: {
        const double z = standard_normal();
        const double w = chi_squared(dist.nu);
        return dist.sigma * z / std::sqrt(w / dist.nu);
    }
    case DistKind::exponential:
        return std::exponential_distribution<double>(1.0 / dist.sigma)(engine_);
    }
    return 0.0;
}

double Sampler::draw(const ScaledInvChi2& spec) {
    return spec.nu * spec.tau * spec.tau / chi_squared(spec.nu);
}

double Sampler::draw(const SampleSpec& spec) {
    return std::visit([this](const auto& s) { return draw(s); }, spec);
}

std::vector<double> sample(const SampleSpec& spec, std::size_t n, RngSeed seed) {
    if (n == 0) {
        throw std::invalid_argument("sample: n must be >= 1");
    }
    if (const auto* d = std::get_if<DistSpec>(&spec)) {
        d->validate();
    } else {
        const auto& s = std::get<ScaledInvChi2>(spec);
        if (!(s.nu > 0.0) || !(s.tau > 0.0) || !std::isfinite(s.nu) || !std::isfinite(s.tau)) {
            throw std::invalid_argument("scaled_inv_chi2: nu and tau must be positive");
        }
    }
    Sampler sampler(seed);
    std::vector<double> out(n);
    for (auto& v : out) {
        v = sampler.draw(spec);
    }
    return out;
}

} // namespace concord
