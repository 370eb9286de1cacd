#include "concord/genesis.hpp"

#include "concord/error.hpp"
#include "concord/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace concord {

namespace {

constexpr std::size_t kMaxRedraws = 100000;

// Inverse of Date::days() (days since 1970-01-01).
Date date_from_days(long z) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const long doe = z - era * 146097;
    const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const long mp = (5 * doy + 2) / 153;
    const unsigned d = static_cast<unsigned>(doy - (153 * mp + 2) / 5 + 1);
    const unsigned m = static_cast<unsigned>(mp < 10 ? mp + 3 : mp - 9);
    const long y = yoe + era * 400 + (m <= 2 ? 1 : 0);
    return {static_cast<int>(y), m, d};
}

std::string quantity_name(std::size_t index, std::size_t count) {
    const int width = static_cast<int>(std::to_string(count > 0 ? count - 1 : 0).size());
    char buf[32];
    std::snprintf(buf, sizeof buf, "q%0*zu", width, index);
    return buf;
}

double pair_weight(Weighting w, std::size_t n) {
    const double npairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    switch (w) {
    case Weighting::quantities:
        return 1.0 / npairs;
    case Weighting::measurements:
        return static_cast<double>(n) / npairs;
    case Weighting::permutations:
        return 1.0;
    }
    return 1.0;
}

} // namespace

double draw_error(Sampler& sampler, const DistSpec& law) {
    const double e = sampler.draw(law);
    if (law.kind == DistKind::exponential) {
        return sampler.uniform() < 0.5 ? -e : e;
    }
    return e;
}

void SimSpec::validate() const {
    if (n_quantities == 0) throw ValidationError("simulate: n_quantities must be >= 1");
    if (measurements_per_quantity.min < 2) {
        throw ValidationError("simulate: measurements_per_quantity.min must be >= 2");
    }
    if (measurements_per_quantity.max < measurements_per_quantity.min) {
        throw ValidationError("simulate: measurements_per_quantity.max is below min");
    }
    if (!(reported_u.min > 0.0) || !(reported_u.max >= reported_u.min) || !std::isfinite(reported_u.max)) {
        throw ValidationError("simulate: reported_u needs 0 < min <= max");
    }
    if (!(true_value.hi >= true_value.lo) || !std::isfinite(true_value.lo) || !std::isfinite(true_value.hi)) {
        throw ValidationError("simulate: true_value needs lo <= hi");
    }
    if (bounds) {
        if (bounds->lower && bounds->upper && *bounds->upper < *bounds->lower) {
            throw ValidationError("simulate: impossible bounds, upper < lower");
        }
        if (!bounds->contains(true_value.lo) || !bounds->contains(true_value.hi)) {
            throw ValidationError("simulate: true_value range extends outside the bounds");
        }
    }
    if (date_range && date_range->last < date_range->first) {
        throw ValidationError("simulate: date_range ends before it starts");
    }
    try {
        error_law.validate();
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("simulate: error_law: ") + e.what());
    }
}

Dataset simulate_dataset(const SimSpec& spec) {
    spec.validate();
    Dataset d;
    d.name = "simulated";
    d.quantities.reserve(spec.n_quantities);
    const double log_lo = std::log(spec.reported_u.min);
    const double log_span = std::log(spec.reported_u.max) - log_lo;
    const std::size_t count_span = spec.measurements_per_quantity.max - spec.measurements_per_quantity.min + 1;
    for (std::size_t q = 0; q < spec.n_quantities; ++q) {
        Sampler rng(derive_seed(spec.seed, q));
        Quantity quantity;
        quantity.id = quantity_name(q, spec.n_quantities);
        if (spec.bounds) {
            quantity.lower_bound = spec.bounds->lower;
            quantity.upper_bound = spec.bounds->upper;
        }
        const std::size_t n = spec.measurements_per_quantity.min + rng.uniform_index(count_span);
        const double truth = spec.true_value.lo + (spec.true_value.hi - spec.true_value.lo) * rng.uniform();
        for (std::size_t i = 0; i < n; ++i) {
            double u = std::exp(log_lo + log_span * rng.uniform());
            if (spec.reported_u.relative) u *= std::abs(truth);
            if (!(u > 0.0)) {
                throw ValidationError("simulate: relative uncertainty of a zero true value in quantity '" +
                                      quantity.id + "'");
            }
            double x = truth + u * draw_error(rng, spec.error_law);
            if (spec.bounds) {
                std::size_t tries = 0;
                while (!spec.bounds->contains(x)) {
                    if (++tries > kMaxRedraws) {
                        throw ValidationError("simulate: bounds unreachable for quantity '" + quantity.id + "'");
                    }
                    x = truth + u * draw_error(rng, spec.error_law);
                }
            }
            Measurement m = Measurement::symmetric(x, u);
            if (spec.date_range) {
                const long first = spec.date_range->first.days();
                const long span = spec.date_range->last.days() - first + 1;
                m.date = date_from_days(first + static_cast<long>(rng.uniform_index(static_cast<std::size_t>(span))));
            }
            quantity.measurements.push_back(std::move(m));
        }
        d.quantities.push_back(std::move(quantity));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Deconvolution
// ---------------------------------------------------------------------------

std::vector<double> default_deconvolution_nu_grid() {
    constexpr std::size_t n = 24;
    std::vector<double> grid(n);
    const double lo = std::log(0.5);
    const double hi = std::log(20.0);
    for (std::size_t i = 0; i < n; ++i) {
        grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return grid;
}

std::vector<double> default_deconvolution_sigma_grid() {
    std::vector<double> grid;
    for (int i = 3; i <= 30; ++i) grid.push_back(0.1 * i);
    return grid;
}

namespace {

// Pair differences for unit-scale, unit-uncertainty t(nu) errors, sorted,
// with cumulative weights so any sigma rescaling is a binary search.
struct PairSample {
    std::vector<double> d;
    std::vector<double> cum; ///< cum[k] = weight of d[0..k)
    double total = 0.0;

    double weight_below(double x) const {
        const auto k = static_cast<std::size_t>(std::lower_bound(d.begin(), d.end(), x) - d.begin());
        return cum[k];
    }
};

PairSample simulate_pairs(double nu, std::span<const std::size_t> multiplicities, const DeconvolveOptions& opt) {
    std::vector<std::size_t> counts;
    for (auto m : multiplicities) {
        if (m >= 2) counts.push_back(m);
    }
    if (counts.empty()) {
        throw std::invalid_argument("deconvolve: no quantity has 2 or more measurements");
    }
    // Separate engines for the normal and chi-squared parts keep the normal
    // draws common to every nu.
    Sampler normals(derive_seed(opt.seed, 1));
    Sampler chis(derive_seed(opt.seed, 2));
    std::vector<std::pair<double, double>> pairs;
    pairs.reserve(opt.target_pairs + 64);
    std::vector<double> e;
    const double scale = 1.0 / std::numbers::sqrt2;
    for (std::size_t k = 0; pairs.size() < opt.target_pairs; ++k) {
        const std::size_t n = counts[k % counts.size()];
        e.resize(n);
        for (auto& v : e) v = normals.standard_normal() / std::sqrt(chis.chi_squared(nu) / nu);
        const double w = pair_weight(opt.weighting, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                pairs.emplace_back(std::abs(e[i] - e[j]) * scale, w);
            }
        }
    }
    std::sort(pairs.begin(), pairs.end());
    PairSample s;
    s.d.reserve(pairs.size());
    s.cum.reserve(pairs.size() + 1);
    s.cum.push_back(0.0);
    for (const auto& [v, w] : pairs) {
        s.d.push_back(v);
        s.total += w;
        s.cum.push_back(s.total);
    }
    return s;
}

double score(const ZHistogram& obs, const std::vector<std::size_t>& bins, const PairSample& s, double sigma) {
    double chi2 = 0.0;
    for (std::size_t b : bins) {
        const double lo = obs.edges[b] / sigma;
        const double hi = obs.edges[b + 1] / sigma;
        const double sim = (s.weight_below(hi) - s.weight_below(lo)) / s.total / obs.width(b);
        const double r = (obs.density[b] - sim) / obs.uncertainty[b];
        chi2 += r * r;
    }
    return chi2;
}

std::vector<std::size_t> scored_bins(const ZHistogram& obs) {
    std::vector<std::size_t> bins;
    for (std::size_t b = 0; b < obs.bins(); ++b) {
        if (b < obs.uncertainty.size() && obs.uncertainty[b] > 0.0) bins.push_back(b);
    }
    if (bins.size() < 3) {
        throw FitError("deconvolve: observed histogram needs at least 3 bins with bootstrap uncertainty");
    }
    return bins;
}

struct Best {
    double nu = 0.0;
    double sigma = 0.0;
    double chi2 = std::numeric_limits<double>::infinity();
};

// Golden-section minimum of score over sigma in [a, b].
Best golden(const ZHistogram& obs, const std::vector<std::size_t>& bins, const PairSample& s, double nu,
            double a, double b) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = score(obs, bins, s, c);
    double fd = score(obs, bins, s, d);
    for (int it = 0; it < 40 && b - a > 1e-5; ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = score(obs, bins, s, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = score(obs, bins, s, d);
        }
    }
    return fc <= fd ? Best{nu, c, fc} : Best{nu, d, fd};
}

} // namespace

double deconvolution_objective(const ZHistogram& observed, std::span<const std::size_t> multiplicities,
                               double nu_x, double sigma_x, const DeconvolveOptions& options) {
    check_bin_edges(observed.edges);
    const auto bins = scored_bins(observed);
    return score(observed, bins, simulate_pairs(nu_x, multiplicities, options), sigma_x);
}

DeconvolveResult deconvolve(const ZHistogram& observed, std::span<const std::size_t> multiplicities,
                            const DeconvolveOptions& options) {
    check_bin_edges(observed.edges);
    const auto bins = scored_bins(observed);
    const auto nus = options.nu_grid.empty() ? default_deconvolution_nu_grid() : options.nu_grid;
    const auto sigmas = options.sigma_grid.empty() ? default_deconvolution_sigma_grid() : options.sigma_grid;
    if (!std::is_sorted(nus.begin(), nus.end()) || !std::is_sorted(sigmas.begin(), sigmas.end()) ||
        nus.front() <= 0.0 || sigmas.front() <= 0.0) {
        throw ConfigError("deconvolve: grids must be positive and ascending");
    }

    DeconvolveResult out;
    Best grid_best;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < nus.size(); ++i) {
        const auto s = simulate_pairs(nus[i], multiplicities, options);
        out.simulated_pairs = s.d.size();
        Best row;
        std::size_t rj = 0;
        for (std::size_t j = 0; j < sigmas.size(); ++j) {
            const double c = score(observed, bins, s, sigmas[j]);
            if (c < row.chi2) {
                row = {nus[i], sigmas[j], c};
                rj = j;
            }
        }
        // Profile sigma between the neighbours of the best grid value.
        if (sigmas.size() > 1) {
            const auto b = golden(observed, bins, s, nus[i], sigmas[rj == 0 ? 0 : rj - 1],
                                  sigmas[std::min(rj + 1, sigmas.size() - 1)]);
            if (b.chi2 < row.chi2) row = b;
        }
        if (row.chi2 < grid_best.chi2) {
            grid_best = row;
            bi = i;
            bj = rj;
        }
    }
    out.grid_nu = grid_best.nu;
    out.grid_sigma = grid_best.sigma;
    out.grid_chi2 = grid_best.chi2;
    out.on_boundary = nus.size() > 1 && sigmas.size() > 1 &&
                      (bi == 0 || bi + 1 == nus.size() || bj == 0 || bj + 1 == sigmas.size());
    out.bins_used = bins.size();

    Best best = grid_best;
    if (options.refine && nus.size() > 1 && sigmas.size() > 1) {
        const double nlo = std::log(nus[bi == 0 ? 0 : bi - 1]);
        const double nhi = std::log(nus[std::min(bi + 1, nus.size() - 1)]);
        const double slo = sigmas[bj == 0 ? 0 : bj - 1];
        const double shi = sigmas[std::min(bj + 1, sigmas.size() - 1)];
        constexpr int sub = 9;
        for (int k = 0; k < sub; ++k) {
            const double nu = std::exp(nlo + (nhi - nlo) * k / (sub - 1.0));
            const auto s = simulate_pairs(nu, multiplicities, options);
            const auto b = golden(observed, bins, s, nu, slo, shi);
            if (b.chi2 < best.chi2) best = b;
        }
    }
    out.nu_x = best.nu;
    out.sigma_x = best.sigma;
    out.chi2 = best.chi2;
    return out;
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

BoundsEffect bounds_effect(const Dataset& d, std::span<const SimBounds> bounds, const BoundsEffectOptions& options) {
    if (bounds.size() != d.quantities.size()) {
        throw std::invalid_argument("bounds_effect: need one bounds entry per quantity");
    }
    options.error_law.validate();
    Dataset free_ds;
    Dataset bounded_ds;
    free_ds.name = d.name + "-unbounded";
    bounded_ds.name = d.name + "-bounded";
    BoundsEffect out;
    for (std::size_t q = 0; q < d.quantities.size(); ++q) {
        const auto& src = d.quantities[q];
        if (src.measurements.size() < 2) continue;
        const auto& bq = bounds[q];
        if (bq.lower && bq.upper && *bq.upper < *bq.lower) {
            throw ValidationError("bounds_effect: quantity '" + src.id + "' has upper bound below lower bound");
        }
        double centre = weighted_mean(src).mean;
        if (bq.lower) centre = std::max(centre, *bq.lower);
        if (bq.upper) centre = std::min(centre, *bq.upper);

        Sampler rng(derive_seed(options.seed, q));
        Quantity fq{src.id, {}, {}, {}};
        Quantity bq_out{src.id, {}, bq.lower, bq.upper};
        for (const auto& m : src.measurements) {
            auto place = [&](double e) { return centre + e * (e >= 0.0 ? m.u_plus : m.u_minus); };
            const double x0 = place(draw_error(rng, options.error_law));
            double xb = x0;
            std::size_t tries = 0;
            while (!bq.contains(xb)) {
                if (++tries > kMaxRedraws) {
                    throw ValidationError("bounds_effect: bounds unreachable for quantity '" + src.id + "'");
                }
                xb = place(draw_error(rng, options.error_law));
            }
            out.redraws += tries;
            Measurement fm = m;
            fm.value = x0;
            Measurement bm = m;
            bm.value = xb;
            fq.measurements.push_back(std::move(fm));
            bq_out.measurements.push_back(std::move(bm));
        }
        free_ds.quantities.push_back(std::move(fq));
        bounded_ds.quantities.push_back(std::move(bq_out));
    }
    if (free_ds.quantities.empty()) {
        throw std::invalid_argument("bounds_effect: no quantity has 2 or more measurements");
    }
    // Same analysis seed: both fits see the same bootstrap quantity draws.
    out.unbounded = analyze_groups(pair_groups(free_ds, options.analysis.pairs), options.analysis).fit;
    out.bounded = analyze_groups(pair_groups(bounded_ds, options.analysis.pairs), options.analysis).fit;
    out.delta_nu = out.bounded.nu - out.unbounded.nu;
    out.delta_sigma = out.bounded.sigma - out.unbounded.sigma;
    return out;
}

BoundsEffect bounds_effect(const Dataset& d, const BoundsEffectOptions& options) {
    std::vector<SimBounds> bounds;
    bounds.reserve(d.quantities.size());
    for (const auto& q : d.quantities) bounds.push_back({q.lower_bound, q.upper_bound});
    return bounds_effect(d, bounds, options);
}

// ---------------------------------------------------------------------------
// Scale mixtures
// ---------------------------------------------------------------------------

void GenesisSpec::validate() const {
    if (n_m < 2) throw std::invalid_argument("genesis: n_m must be >= 2");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("genesis: alpha must be positive");
    if (chi2_max && (!(*chi2_max > 0.0) || !std::isfinite(*chi2_max))) {
        throw std::invalid_argument("genesis: chi2_max must be positive");
    }
    if (!(sigma_floor > 0.0) || !std::isfinite(sigma_floor)) {
        throw std::invalid_argument("genesis: sigma_floor must be positive");
    }
}

double unfound_error_density(double t, const GenesisSpec& g) {
    if (!(t > 0.0)) throw std::invalid_argument("unfound_error_density: t must be positive");
    return std::pow(t, -g.alpha) * chi2_cdf(g.threshold() / (t * t), static_cast<double>(g.n_m) - 1.0);
}

namespace {

constexpr QuadratureOptions kMixtureQuad{1e-11, 0.0, 20000};

// A normalized density on [lo, hi] (hi may be infinite) plus a typical scale.
struct Prepared {
    std::function<double(double)> f;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double scale = 1.0;
};

Prepared prepare(const Prior& prior) {
    return std::visit(
        [](const auto& p) -> Prepared {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, prior::PointMass>) {
                throw std::invalid_argument("point-mass prior has no density");
            } else if constexpr (std::is_same_v<T, prior::ScaledInvChi2>) {
                if (!(p.nu > 0.0) || !(p.tau > 0.0)) {
                    throw std::invalid_argument("scaled-inverse-chi2 prior needs nu > 0 and tau > 0");
                }
                const double a = 0.5 * p.nu;
                const double b = 0.5 * p.nu * p.tau * p.tau;
                const double log_norm = a * std::log(b) - log_gamma(a);
                return {[=](double t) {
                            if (t <= 0.0) return 0.0;
                            const double s = t * t;
                            return 2.0 * t * std::exp(log_norm - (a + 1.0) * std::log(s) - b / s);
                        },
                        0.0, std::numeric_limits<double>::infinity(), p.tau};
            } else if constexpr (std::is_same_v<T, prior::Normal>) {
                if (!(p.sd > 0.0)) throw std::invalid_argument("normal prior needs sd > 0");
                const double mass = normal_cdf(p.mean / p.sd);
                if (!(mass > 0.0)) throw std::invalid_argument("normal prior has no mass at t > 0");
                const double c = 1.0 / (p.sd * std::sqrt(2.0 * std::numbers::pi) * mass);
                return {[=](double t) {
                            if (t <= 0.0) return 0.0;
                            const double u = (t - p.mean) / p.sd;
                            return c * std::exp(-0.5 * u * u);
                        },
                        0.0, std::numeric_limits<double>::infinity(), std::max(p.sd, std::abs(p.mean))};
            } else if constexpr (std::is_same_v<T, prior::PowerLaw>) {
                if (!(p.t_min > 0.0)) throw std::invalid_argument("power-law prior needs t_min > 0");
                if (p.t_max && !(*p.t_max > p.t_min)) {
                    throw std::invalid_argument("power-law prior needs t_max > t_min");
                }
                if (!p.t_max && p.alpha <= 1.0) {
                    throw std::invalid_argument("power-law prior with alpha <= 1 diverges without a t_max cutoff");
                }
                double norm;
                if (p.t_max) {
                    norm = p.alpha == 1.0 ? std::log(*p.t_max / p.t_min)
                                          : (std::pow(p.t_min, 1.0 - p.alpha) - std::pow(*p.t_max, 1.0 - p.alpha)) /
                                                (p.alpha - 1.0);
                } else {
                    norm = std::pow(p.t_min, 1.0 - p.alpha) / (p.alpha - 1.0);
                }
                const double hi = p.t_max.value_or(std::numeric_limits<double>::infinity());
                const double alpha = p.alpha;
                return {[=](double t) { return t < p.t_min || t > hi ? 0.0 : std::pow(t, -alpha) / norm; }, p.t_min,
                        hi, p.t_min};
            } else {
                const GenesisSpec g = p.spec;
                g.validate();
                auto raw = [g](double t) { return unfound_error_density(t, g); };
                const auto z = integrate_to_infinity(raw, g.sigma_floor, g.sigma_floor, kMixtureQuad);
                if (!(z.value > 0.0) || !std::isfinite(z.value)) {
                    throw std::invalid_argument("unfound-error prior cannot be normalized");
                }
                const double norm = z.value;
                return {[g, norm](double t) { return t < g.sigma_floor ? 0.0 : unfound_error_density(t, g) / norm; },
                        g.sigma_floor, std::numeric_limits<double>::infinity(), g.sigma_floor};
            }
        },
        prior);
}

double normal_kernel(double x, double t) {
    const double u = x / t;
    return std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * t);
}

double mixture(const Prepared& p, double x) {
    auto integrand = [&](double t) { return t > 0.0 ? p.f(t) * normal_kernel(x, t) : 0.0; };
    // Split at the integrand peak so both pieces are smooth and one-sided.
    const double lo_scan = p.lo > 0.0 ? p.lo : 1e-3 * std::max(p.scale, std::abs(x));
    const double hi_scan = std::isfinite(p.hi) ? p.hi : 1e3 * std::max(p.scale, std::abs(x));
    double peak = lo_scan;
    double peak_value = -1.0;
    constexpr int scan = 240;
    for (int k = 0; k <= scan; ++k) {
        const double t = lo_scan * std::pow(hi_scan / lo_scan, static_cast<double>(k) / scan);
        const double v = integrand(t);
        if (v > peak_value) {
            peak_value = v;
            peak = t;
        }
    }
    double total = integrate(integrand, p.lo, peak, kMixtureQuad).value;
    if (std::isfinite(p.hi)) {
        total += integrate(integrand, peak, p.hi, kMixtureQuad).value;
    } else {
        total += integrate_to_infinity(integrand, peak, peak, kMixtureQuad).value;
    }
    return total;
}

} // namespace

double prior_density(const Prior& f, double t) {
    return prepare(f).f(t);
}

double mixture_density(const Prior& f, double x) {
    if (const auto* pm = std::get_if<prior::PointMass>(&f)) {
        if (!(pm->t > 0.0)) throw std::invalid_argument("point-mass prior needs t > 0");
        return normal_kernel(x, pm->t);
    }
    return mixture(prepare(f), x);
}

GenesisFit genesis_fit(const GenesisSpec& g) {
    g.validate();
    const auto prepared = prepare(prior::UnfoundError{g});
    constexpr std::size_t n = 201;
    std::vector<double> z(n);
    std::vector<double> logp(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = 0.1 * static_cast<double>(i);
        logp[i] = std::log(mixture(prepared, z[i]));
    }
    const ResidualFn fn = [&](double nu, double sigma, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) out[i] = logp[i] - std::log(student_t_pdf(z[i], nu, sigma));
    };
    FitOptions opts;
    GenesisFit out;
    out.fit = least_squares_t(fn, n, g.sigma_floor, opts);
    out.effective_nu = out.fit.nu;
    out.sigma = out.fit.sigma;
    out.asymptotic_nu = static_cast<double>(g.n_m) - 2.0 + g.alpha;
    out.rms_log_residual = std::sqrt(out.fit.chi2 / static_cast<double>(n));
    return out;
}

double genesis_tail_exponent(const GenesisSpec& g) {
    return genesis_fit(g).effective_nu;
}

} // namespace concord
