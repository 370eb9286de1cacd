#include "concord/tfit.hpp"

#include "concord/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace concord {

namespace {

constexpr double kSigmaMin = 1e-8;
constexpr double kSigmaMax = 1e8;

struct Box {
    double lo_a, hi_a, lo_b, hi_b;

    std::array<double, 2> clamp(std::array<double, 2> p) const {
        return {std::clamp(p[0], lo_a, hi_a), std::clamp(p[1], lo_b, hi_b)};
    }
};

class Problem {
public:
    Problem(const ResidualFn& fn, std::size_t n, const FitOptions& options)
        : fn_(fn), r_(n), box_{std::log(options.nu_min), std::log(options.nu_max), std::log(kSigmaMin),
                                std::log(kSigmaMax)} {}

    const Box& box() const { return box_; }

    double objective(const std::array<double, 2>& p) {
        residuals(p, r_);
        double s = 0.0;
        for (double v : r_) s += v * v;
        return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
    }

    void residuals(const std::array<double, 2>& p, std::vector<double>& out) {
        out.resize(r_.size());
        fn_(std::exp(p[0]), std::exp(p[1]), out);
    }

    // Central differences in log space, one-sided against the box.
    void jacobian(const std::array<double, 2>& p, std::vector<double>& ja, std::vector<double>& jb) {
        constexpr double h = 1e-6;
        std::vector<double> plus;
        std::vector<double> minus;
        auto column = [&](int k, std::vector<double>& out) {
            auto up = p;
            auto dn = p;
            const double lo = k == 0 ? box_.lo_a : box_.lo_b;
            const double hi = k == 0 ? box_.hi_a : box_.hi_b;
            up[k] = std::min(p[k] + h, hi);
            dn[k] = std::max(p[k] - h, lo);
            residuals(up, plus);
            residuals(dn, minus);
            const double step = up[k] - dn[k];
            out.resize(plus.size());
            for (std::size_t i = 0; i < plus.size(); ++i) {
                out[i] = (plus[i] - minus[i]) / step;
            }
        };
        column(0, ja);
        column(1, jb);
    }

private:
    const ResidualFn& fn_;
    std::vector<double> r_;
    Box box_;
};

struct Candidate {
    std::array<double, 2> p{};
    double obj = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

Candidate levenberg_marquardt(Problem& prob, std::array<double, 2> p, const FitOptions& opt) {
    Candidate c;
    c.p = prob.box().clamp(p);
    c.obj = prob.objective(c.p);
    if (!std::isfinite(c.obj)) return c;
    std::vector<double> r;
    std::vector<double> ja;
    std::vector<double> jb;
    double lambda = 1e-3;
    bool need_jacobian = true;
    double a11 = 0, a12 = 0, a22 = 0, g1 = 0, g2 = 0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        c.iterations = it + 1;
        if (need_jacobian) {
            prob.residuals(c.p, r);
            prob.jacobian(c.p, ja, jb);
            a11 = a12 = a22 = g1 = g2 = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) {
                a11 += ja[i] * ja[i];
                a12 += ja[i] * jb[i];
                a22 += jb[i] * jb[i];
                g1 += ja[i] * r[i];
                g2 += jb[i] * r[i];
            }
            need_jacobian = false;
        }
        const double d11 = a11 + lambda * std::max(a11, 1e-12);
        const double d22 = a22 + lambda * std::max(a22, 1e-12);
        const double det = d11 * d22 - a12 * a12;
        if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
            lambda *= 10.0;
            if (lambda > 1e16) break;
            continue;
        }
        std::array<double, 2> step{(-g1 * d22 + g2 * a12) / det, (-g2 * d11 + g1 * a12) / det};
        // Active bounds: freeze the blocked coordinate and solve for the other.
        const auto& box = prob.box();
        const bool block_a = (c.p[0] >= box.hi_a && step[0] > 0.0) || (c.p[0] <= box.lo_a && step[0] < 0.0);
        const bool block_b = (c.p[1] >= box.hi_b && step[1] > 0.0) || (c.p[1] <= box.lo_b && step[1] < 0.0);
        if (block_a && !block_b) step = {0.0, -g2 / d22};
        if (block_b && !block_a) step = {-g1 / d11, 0.0};
        if (block_a && block_b) step = {0.0, 0.0};
        const auto trial = prob.box().clamp({c.p[0] + step[0], c.p[1] + step[1]});
        const double taken = std::hypot(trial[0] - c.p[0], trial[1] - c.p[1]);
        const double obj = prob.objective(trial);
        if (obj < c.obj) {
            const double rel = (c.obj - obj) / std::max(c.obj, 1e-300);
            c.p = trial;
            c.obj = obj;
            lambda = std::max(lambda / 10.0, 1e-12);
            need_jacobian = true;
            if (rel < opt.rel_tol || taken < opt.step_tol) {
                c.converged = true;
                break;
            }
        } else {
            if (taken < opt.step_tol) {
                c.converged = true;
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e16) {
                c.converged = true;
                break;
            }
        }
    }
    return c;
}

Candidate nelder_mead(Problem& prob, std::array<double, 2> start, const FitOptions& opt) {
    std::array<std::array<double, 2>, 3> x{start, start, start};
    x[1][0] += 0.3;
    x[2][1] += 0.2;
    std::array<double, 3> f{};
    for (int i = 0; i < 3; ++i) {
        x[i] = prob.box().clamp(x[i]);
        f[i] = prob.objective(x[i]);
    }
    Candidate c;
    for (int it = 0; it < 20 * opt.max_iterations; ++it) {
        std::array<int, 3> o{0, 1, 2};
        std::sort(o.begin(), o.end(), [&](int a, int b) { return f[a] < f[b]; });
        const int best = o[0], mid = o[1], worst = o[2];
        c.iterations = it + 1;
        const double spread = std::abs(f[worst] - f[best]);
        if (spread <= opt.rel_tol * std::max(std::abs(f[best]), 1e-300) &&
            std::hypot(x[worst][0] - x[best][0], x[worst][1] - x[best][1]) < opt.step_tol * 100) {
            c.converged = true;
            break;
        }
        const std::array<double, 2> centroid{0.5 * (x[best][0] + x[mid][0]), 0.5 * (x[best][1] + x[mid][1])};
        auto along = [&](double t) {
            return prob.box().clamp({centroid[0] + t * (x[worst][0] - centroid[0]),
                                     centroid[1] + t * (x[worst][1] - centroid[1])});
        };
        const auto xr = along(-1.0);
        const double fr = prob.objective(xr);
        if (fr < f[best]) {
            const auto xe = along(-2.0);
            const double fe = prob.objective(xe);
            if (fe < fr) {
                x[worst] = xe;
                f[worst] = fe;
            } else {
                x[worst] = xr;
                f[worst] = fr;
            }
        } else if (fr < f[mid]) {
            x[worst] = xr;
            f[worst] = fr;
        } else {
            const auto xc = fr < f[worst] ? along(-0.5) : along(0.5);
            const double fc = prob.objective(xc);
            if (fc < std::min(fr, f[worst])) {
                x[worst] = xc;
                f[worst] = fc;
            } else {
                for (int k : {mid, worst}) {
                    x[k] = prob.box().clamp({0.5 * (x[k][0] + x[best][0]), 0.5 * (x[k][1] + x[best][1])});
                    f[k] = prob.objective(x[k]);
                }
            }
        }
    }
    const int best = static_cast<int>(std::min_element(f.begin(), f.end()) - f.begin());
    c.p = x[best];
    c.obj = f[best];
    return c;
}

double projected_gradient_norm(Problem& prob, const std::array<double, 2>& p) {
    std::vector<double> r;
    std::vector<double> ja;
    std::vector<double> jb;
    prob.residuals(p, r);
    prob.jacobian(p, ja, jb);
    double g[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < r.size(); ++i) {
        g[0] += 2.0 * ja[i] * r[i];
        g[1] += 2.0 * jb[i] * r[i];
    }
    const auto& box = prob.box();
    // A component pushing outward at an active bound does not count.
    if ((p[0] <= box.lo_a && g[0] > 0.0) || (p[0] >= box.hi_a && g[0] < 0.0)) g[0] = 0.0;
    if ((p[1] <= box.lo_b && g[1] > 0.0) || (p[1] >= box.hi_b && g[1] < 0.0)) g[1] = 0.0;
    return std::hypot(g[0], g[1]);
}

} // namespace

TFitResult least_squares_t(const ResidualFn& residuals, std::size_t n_residuals, double sigma_hint,
                           const FitOptions& options) {
    if (n_residuals < 3) {
        throw FitError("fit needs at least 3 residuals, got " + std::to_string(n_residuals));
    }
    if (!(sigma_hint > 0.0) || !std::isfinite(sigma_hint)) sigma_hint = 1.0;
    Problem prob(residuals, n_residuals, options);

    Candidate best;
    int total_iterations = 0;
    for (double nu0 : {1.0, 2.5, 6.0, 30.0, 300.0}) {
        for (double s0 : {0.5, 1.0, 2.0}) {
            const auto c = levenberg_marquardt(prob, {std::log(nu0), std::log(s0 * sigma_hint)}, options);
            total_iterations += c.iterations;
            if (c.obj < best.obj || (c.obj == best.obj && c.converged && !best.converged)) {
                best = c;
            }
        }
    }
    double grad = projected_gradient_norm(prob, best.p);
    const double grad_tol = 1e-3 * std::max(1.0, best.obj);
    if (!best.converged || !(grad <= grad_tol)) {
        auto nm = nelder_mead(prob, best.p, options);
        auto polished = levenberg_marquardt(prob, nm.obj < best.obj ? nm.p : best.p, options);
        total_iterations += nm.iterations + polished.iterations;
        if (polished.obj <= best.obj) {
            best = polished;
        } else if (nm.obj < best.obj) {
            best = nm;
        }
        grad = projected_gradient_norm(prob, best.p);
    }

    TFitResult out;
    out.nu = std::exp(best.p[0]);
    out.sigma = std::exp(best.p[1]);
    out.chi2 = best.obj;
    out.iterations = total_iterations;
    out.gradient_norm = grad;
    out.converged = best.converged && grad <= 1e-3 * std::max(1.0, best.obj);
    out.gaussian_compatible = best.p[0] >= prob.box().hi_a - 1e-9;
    out.n_bins_used = n_residuals;
    const double dof = static_cast<double>(n_residuals) - 2.0;
    out.chi2_per_dof = dof > 0.0 ? out.chi2 / dof : 0.0;

    // Curvature of χ² at the optimum: cov = (JᵀJ)⁻¹ in (nu, sigma).
    std::vector<double> ja;
    std::vector<double> jb;
    prob.jacobian(best.p, ja, jb);
    double a11 = 0.0, a12 = 0.0, a22 = 0.0;
    for (std::size_t i = 0; i < ja.size(); ++i) {
        const double dn = ja[i] / out.nu;
        const double ds = jb[i] / out.sigma;
        a11 += dn * dn;
        a12 += dn * ds;
        a22 += ds * ds;
    }
    const double det = a11 * a22 - a12 * a12;
    if (det > 0.0 && std::isfinite(det)) {
        out.u_nu = std::sqrt(a22 / det);
        out.u_sigma = std::sqrt(a11 / det);
    } else {
        out.u_nu = std::numeric_limits<double>::quiet_NaN();
        out.u_sigma = a22 > 0.0 ? std::sqrt(1.0 / a22) : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

double model_bin_density(const ZHistogram& h, std::size_t bin, double nu, double sigma,
                         DensityEvaluation evaluation) {
    if (evaluation == DensityEvaluation::bin_center) {
        return 2.0 * student_t_pdf(h.center(bin), nu, sigma);
    }
    const auto dist = DistSpec::student_t(nu, sigma);
    return (survival(dist, h.edges[bin]) - survival(dist, h.edges[bin + 1])) / h.width(bin);
}

namespace {

std::vector<std::size_t> usable_bins(const ZHistogram& h) {
    std::vector<std::size_t> bins;
    for (std::size_t i = 0; i < h.bins(); ++i) {
        if (i < h.uncertainty.size() && h.uncertainty[i] > 0.0 && std::isfinite(h.uncertainty[i])) {
            bins.push_back(i);
        }
    }
    return bins;
}

double histogram_median(const ZHistogram& h) {
    double cum = 0.0;
    for (std::size_t i = 0; i < h.bins(); ++i) {
        const double p = h.density[i] * h.width(i);
        if (cum + p >= 0.5 && p > 0.0) {
            return h.edges[i] + (0.5 - cum) / p * h.width(i);
        }
        cum += p;
    }
    return h.edges.back();
}

} // namespace

double fit_objective(const ZHistogram& h, double nu, double sigma, const FitOptions& options) {
    double s = 0.0;
    for (std::size_t i : usable_bins(h)) {
        const double r = (h.density[i] - model_bin_density(h, i, nu, sigma, options.evaluation)) / h.uncertainty[i];
        s += r * r;
    }
    return s;
}

TFitResult fit_student_t(const ZHistogram& h, const FitOptions& options) {
    const auto bins = usable_bins(h);
    if (bins.size() < 3) {
        throw FitError("fit needs at least 3 bins with positive uncertainty, found " +
                       std::to_string(bins.size()));
    }
    const ResidualFn fn = [&](double nu, double sigma, std::vector<double>& out) {
        for (std::size_t k = 0; k < bins.size(); ++k) {
            const std::size_t i = bins[k];
            out[k] = (h.density[i] - model_bin_density(h, i, nu, sigma, options.evaluation)) / h.uncertainty[i];
        }
    };
    // Folded t median is about 0.7-0.8 sigma for the tail range of interest.
    auto out = least_squares_t(fn, bins.size(), std::max(histogram_median(h), 1e-3) / 0.75, options);
    out.n_bins_excluded = h.bins() - bins.size();
    return out;
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

SampleGroups pair_groups(const Dataset& d, const PairOptions& options) {
    SampleGroups groups;
    for (const auto& q : d.quantities) {
        if (q.measurements.size() < 2) continue;
        std::vector<WeightedValue> g;
        for (const auto& p : enumerate_pairs(q, options)) {
            g.push_back({p.z, p.weight});
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

SampleGroups h_groups(const Dataset& d) {
    SampleGroups groups;
    for (const auto& q : d.quantities) {
        if (q.measurements.size() < 2) continue;
        std::vector<WeightedValue> g;
        for (const auto& h : h_scores(q)) {
            g.push_back({h.h, 1.0});
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

ZHistogram histogram_of_groups(const SampleGroups& groups, std::span<const double> edges) {
    std::vector<double> values;
    std::vector<double> weights;
    for (const auto& g : groups) {
        for (const auto& v : g) {
            values.push_back(v.value);
            weights.push_back(v.weight);
        }
    }
    return build_histogram(values, weights, edges);
}

namespace {

// Per-group bin totals in compressed form so each replica costs
// O(groups · touched bins) instead of O(entries).
struct GroupBins {
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> bin;
    std::vector<double> weight;
    std::vector<double> total;

    GroupBins(const SampleGroups& groups, std::span<const double> edges) {
        const std::size_t nb = edges.size() - 1;
        std::vector<double> acc(nb + 1, 0.0);
        std::vector<std::uint32_t> touched;
        for (const auto& g : groups) {
            double t = 0.0;
            for (const auto& v : g) {
                const std::size_t b = std::min(bin_index(edges, v.value), nb);
                if (acc[b] == 0.0) touched.push_back(static_cast<std::uint32_t>(b));
                acc[b] += v.weight;
                t += v.weight;
            }
            std::sort(touched.begin(), touched.end());
            for (auto b : touched) {
                if (b < nb) {
                    bin.push_back(b);
                    weight.push_back(acc[b]);
                }
                acc[b] = 0.0;
            }
            touched.clear();
            offsets.push_back(bin.size());
            total.push_back(t);
        }
    }
};

} // namespace

BootstrapResult bootstrap_groups(const SampleGroups& groups, std::span<const double> edges,
                                 const BootstrapOptions& options) {
    check_bin_edges(edges);
    if (groups.empty()) {
        throw std::invalid_argument("bootstrap: dataset has no quantities to resample");
    }
    if (options.replicas < 2) {
        throw std::invalid_argument("bootstrap: need at least 2 replicas");
    }
    const std::size_t nb = edges.size() - 1;
    const std::size_t ng = groups.size();
    const GroupBins gb(groups, edges);
    std::vector<double> widths(nb);
    for (std::size_t b = 0; b < nb; ++b) widths[b] = edges[b + 1] - edges[b];

    std::vector<std::vector<double>> replica_density(options.replicas, std::vector<double>(nb, 0.0));
    for (std::size_t r = 0; r < options.replicas; ++r) {
        Sampler sampler(derive_seed(options.seed, r));
        auto& sums = replica_density[r];
        double total = 0.0;
        for (std::size_t k = 0; k < ng; ++k) {
            const std::size_t g = sampler.uniform_index(ng);
            for (std::size_t e = gb.offsets[g]; e < gb.offsets[g + 1]; ++e) {
                sums[gb.bin[e]] += gb.weight[e];
            }
            total += gb.total[g];
        }
        for (std::size_t b = 0; b < nb; ++b) {
            sums[b] = total > 0.0 ? sums[b] / total / widths[b] : 0.0;
        }
    }

    BootstrapResult out;
    out.n_replicas = options.replicas;
    out.per_bin_sigma.assign(nb, 0.0);
    out.per_bin_mean.assign(nb, 0.0);
    const double n = static_cast<double>(options.replicas);
    for (std::size_t b = 0; b < nb; ++b) {
        // Shift by the first replica so identical replicas give exactly zero.
        const double ref = replica_density[0][b];
        double s = 0.0;
        double ss = 0.0;
        for (std::size_t r = 0; r < options.replicas; ++r) {
            const double dv = replica_density[r][b] - ref;
            s += dv;
            ss += dv * dv;
        }
        out.per_bin_mean[b] = ref + s / n;
        const double var = (ss - s * s / n) / (n - 1.0);
        out.per_bin_sigma[b] = var > 0.0 ? std::sqrt(var) : 0.0;
    }

    if (options.refit) {
        ZHistogram h;
        h.edges.assign(edges.begin(), edges.end());
        h.uncertainty = out.per_bin_sigma;
        std::vector<double> nus;
        std::vector<double> sigmas;
        for (std::size_t r = 0; r < options.replicas; ++r) {
            h.density = replica_density[r];
            try {
                const auto fit = fit_student_t(h, options.fit);
                if (fit.converged) {
                    nus.push_back(fit.nu);
                    sigmas.push_back(fit.sigma);
                }
            } catch (const FitError&) {
                break; // same bins are unusable for every replica
            }
        }
        if (nus.size() >= 2) {
            auto sd = [](const std::vector<double>& v) {
                const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
                double ss = 0.0;
                for (double x : v) ss += (x - m) * (x - m);
                return std::sqrt(ss / static_cast<double>(v.size() - 1));
            };
            out.param_spread = ParamSpread{sd(nus), sd(sigmas), nus.size()};
        }
    }
    return out;
}

BootstrapResult bootstrap(const Dataset& d, std::span<const double> edges, const PairOptions& pairs,
                          const BootstrapOptions& options) {
    if (d.quantities.empty()) {
        throw std::invalid_argument("bootstrap: empty dataset");
    }
    return bootstrap_groups(pair_groups(d, pairs), edges, options);
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

DistributionFit analyze_groups(const SampleGroups& groups, const AnalysisConfig& config) {
    DistributionFit out;
    out.histogram = histogram_of_groups(groups, config.edges);
    out.entries = out.histogram.total_pairs;
    BootstrapOptions bo;
    bo.replicas = config.replicas;
    bo.seed = config.seed;
    bo.refit = config.refit_replicas;
    bo.fit = config.fit;
    out.bootstrap = bootstrap_groups(groups, config.edges, bo);
    out.histogram.uncertainty = out.bootstrap.per_bin_sigma;
    out.fit = fit_student_t(out.histogram, config.fit);

    std::vector<double> values;
    std::vector<double> weights;
    for (const auto& g : groups) {
        for (const auto& v : g) {
            values.push_back(v.value);
            weights.push_back(v.weight);
        }
    }
    out.survival = empirical_survival(values, weights, config.thresholds);
    out.p_normal_z95 = survival(DistSpec::normal(), out.survival.z95);
    return out;
}

FitReport fit_report(const Dataset& d, const AnalysisConfig& config) {
    if (d.quantities.empty()) {
        throw std::invalid_argument("fit_report: empty dataset");
    }
    FitReport report;
    report.quantities = d.quantities.size();
    report.measurements = d.measurement_count();
    const auto groups = pair_groups(d, config.pairs);
    for (const auto& g : groups) report.pairs += g.size();
    report.z = analyze_groups(groups, config);
    if (config.h_scores) {
        AnalysisConfig hc = config;
        hc.seed = derive_seed(config.seed, 0x68);
        report.h = analyze_groups(h_groups(d), hc);
    }
    return report;
}

} // namespace concord
