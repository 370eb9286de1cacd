#include "concord/comparison.hpp"

#include "concord/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace concord {

std::string to_string(CombineKind kind) {
    switch (kind) {
    case CombineKind::quadrature: return "quadrature";
    case CombineKind::linear: return "linear";
    case CombineKind::covariance: return "covariance";
    }
    return "unknown";
}

CombineKind combine_kind_from_string(std::string_view name) {
    if (name == "quadrature") return CombineKind::quadrature;
    if (name == "linear") return CombineKind::linear;
    if (name == "covariance") return CombineKind::covariance;
    throw ConfigError("unknown mode '" + std::string(name) + "' (expected quadrature or linear)");
}

std::string to_string(Weighting w) {
    switch (w) {
    case Weighting::quantities: return "Q";
    case Weighting::measurements: return "M";
    case Weighting::permutations: return "P";
    }
    return "?";
}

Weighting weighting_from_string(std::string_view name) {
    if (name == "Q" || name == "q") return Weighting::quantities;
    if (name == "M" || name == "m") return Weighting::measurements;
    if (name == "P" || name == "p") return Weighting::permutations;
    throw ConfigError("unknown weighting '" + std::string(name) + "' (expected Q, M or P)");
}

double pair_z(const Measurement& a, const Measurement& b, CombineMode mode) {
    if (a.value == b.value) {
        return 0.0;
    }
    const bool a_below = a.value < b.value;
    const double ua = a_below ? a.u_plus : a.u_minus;
    const double ub = a_below ? b.u_minus : b.u_plus;
    double denom = 0.0;
    switch (mode.kind) {
    case CombineKind::quadrature:
        denom = std::sqrt(ua * ua + ub * ub);
        break;
    case CombineKind::linear:
        denom = ua + ub;
        break;
    case CombineKind::covariance: {
        const double var = ua * ua - 2.0 * mode.covariance + ub * ub;
        denom = var > 0.0 ? std::sqrt(var) : 0.0;
        break;
    }
    }
    if (!(denom > 0.0) || !std::isfinite(denom)) {
        throw ValidationError("pair has non-positive combined uncertainty");
    }
    return std::abs(a.value - b.value) / denom;
}

namespace {

bool shares_source(const Measurement& a, const Measurement& b) {
    return a.source_id && b.source_id && *a.source_id == *b.source_id;
}

std::optional<double> relative_uncertainty(const Measurement& m) {
    if (m.value == 0.0) return std::nullopt;
    return m.mean_uncertainty() / std::abs(m.value);
}

} // namespace

std::vector<ComparisonPair> enumerate_pairs(const Quantity& q, const PairOptions& options) {
    const std::size_t n = q.measurements.size();
    if (n < 2) {
        throw ValidationError("quantity '" + q.id + "' needs at least 2 measurements for pairing");
    }
    std::vector<ComparisonPair> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = q.measurements[i];
            const auto& b = q.measurements[j];
            if (options.exclude_shared_source && shares_source(a, b)) {
                continue;
            }
            ComparisonPair p;
            try {
                p.z = pair_z(a, b, options.mode);
            } catch (const ValidationError& e) {
                throw ValidationError("quantity '" + q.id + "', measurements " + std::to_string(i) +
                                      " and " + std::to_string(j) + ": " + e.what());
            }
            p.quantity_id = q.id;
            p.first = i;
            p.second = j;
            if (a.date && b.date) {
                p.year_gap = years_between(*a.date, *b.date);
                if (*a.date != *b.date) {
                    const auto& newer = *a.date > *b.date ? a : b;
                    const auto& older = *a.date > *b.date ? b : a;
                    const auto rn = relative_uncertainty(newer);
                    const auto ro = relative_uncertainty(older);
                    if (rn && ro && *ro > 0.0) {
                        p.newer_older_u_ratio = *rn / *ro;
                    }
                }
            }
            pairs.push_back(std::move(p));
        }
    }
    const double kept = static_cast<double>(pairs.size());
    double weight = 1.0;
    switch (options.weighting) {
    case Weighting::measurements: weight = static_cast<double>(n) / kept; break;
    case Weighting::quantities: weight = 1.0 / kept; break;
    case Weighting::permutations: weight = 1.0; break;
    }
    for (auto& p : pairs) {
        p.weight = weight;
    }
    return pairs;
}

std::vector<ComparisonPair> enumerate_pairs(const Dataset& d, const PairOptions& options) {
    std::vector<ComparisonPair> all;
    for (const auto& q : d.quantities) {
        if (q.measurements.size() < 2) continue;
        auto pairs = enumerate_pairs(q, options);
        all.insert(all.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
    }
    return all;
}

// ---------------------------------------------------------------------------
// Weighted mean, h, chi2
// ---------------------------------------------------------------------------

WeightedMean weighted_mean(const Quantity& q) {
    const std::size_t n = q.measurements.size();
    if (n == 0) {
        throw ValidationError("quantity '" + q.id + "' has no measurements");
    }
    WeightedMean out;
    out.used_uncertainty.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& m = q.measurements[i];
        out.used_uncertainty[i] = m.symmetric_uncertainty() ? m.u_plus : m.mean_uncertainty();
    }
    auto compute = [&] {
        double sw = 0.0;
        double swx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = out.used_uncertainty[i];
            if (!(u > 0.0)) {
                throw ValidationError("quantity '" + q.id + "', measurement " + std::to_string(i) +
                                      ": zero uncertainty on the side facing the mean");
            }
            const double w = 1.0 / (u * u);
            sw += w;
            swx += w * q.measurements[i].value;
        }
        out.mean = swx / sw;
        out.uncertainty = std::sqrt(1.0 / sw);
    };
    compute();
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& m = q.measurements[i];
            if (m.symmetric_uncertainty()) continue;
            const double u = m.value < out.mean   ? m.u_plus
                             : m.value > out.mean ? m.u_minus
                                                  : m.mean_uncertainty();
            if (u != out.used_uncertainty[i]) {
                out.used_uncertainty[i] = u;
                changed = true;
            }
        }
        if (!changed) break;
        compute();
    }
    return out;
}

std::vector<HScore> h_scores(const Quantity& q) {
    if (q.measurements.size() < 2) {
        throw ValidationError("quantity '" + q.id + "' needs at least 2 measurements for h scores");
    }
    const auto wm = weighted_mean(q);
    std::vector<HScore> out;
    out.reserve(q.measurements.size());
    const double ux2 = wm.uncertainty * wm.uncertainty;
    for (std::size_t i = 0; i < q.measurements.size(); ++i) {
        const double u = wm.used_uncertainty[i];
        out.push_back({i, std::abs(q.measurements[i].value - wm.mean) / std::sqrt(u * u + ux2)});
    }
    return out;
}

Consistency consistency_chi2(const Quantity& q) {
    if (q.measurements.size() < 2) {
        throw ValidationError("quantity '" + q.id + "' needs at least 2 measurements for chi2");
    }
    const auto wm = weighted_mean(q);
    Consistency c;
    for (std::size_t i = 0; i < q.measurements.size(); ++i) {
        const double r = (q.measurements[i].value - wm.mean) / wm.used_uncertainty[i];
        c.chi2 += r * r;
    }
    c.dof = q.measurements.size() - 1;
    c.i2 = c.chi2 > 0.0 ? std::max(0.0, 1.0 - static_cast<double>(c.dof) / c.chi2) : 0.0;
    return c;
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

double ZHistogram::total_probability() const {
    double p = overflow_probability();
    for (std::size_t i = 0; i < bins(); ++i) {
        p += density[i] * width(i);
    }
    return p;
}

std::vector<double> default_bin_edges() {
    std::vector<double> e;
    for (int i = 0; i <= 15; ++i) e.push_back(0.2 * i);
    for (int i = 1; i <= 6; ++i) e.push_back(3.0 + 0.5 * i);
    for (int i = 7; i <= 10; ++i) e.push_back(static_cast<double>(i));
    for (int k = 1; k <= 8; ++k) e.push_back(k == 8 ? 100.0 : 10.0 * std::pow(10.0, k / 8.0));
    return e;
}

void check_bin_edges(std::span<const double> edges) {
    if (edges.size() < 2) {
        throw std::invalid_argument("bin edges: need at least two edges");
    }
    if (edges.front() != 0.0) {
        throw std::invalid_argument("bin edges: first edge must be 0");
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1]) || !std::isfinite(edges[i])) {
            throw std::invalid_argument("bin edges must be finite and strictly ascending");
        }
    }
}

std::vector<double> parse_bin_spec(std::string_view spec) {
    auto number = [&](std::string_view s) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) {
            throw ConfigError("bins: cannot parse '" + std::string(s) + "'");
        }
        return v;
    };
    std::vector<double> edges;
    if (spec.empty() || spec == "default") {
        edges = default_bin_edges();
    } else if (spec.starts_with("linear:")) {
        std::vector<std::string_view> parts;
        std::string_view rest = spec.substr(7);
        while (!rest.empty()) {
            const auto pos = rest.find(':');
            parts.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (parts.size() != 3) {
            throw ConfigError("bins: expected linear:lo:hi:n");
        }
        const double lo = number(parts[0]);
        const double hi = number(parts[1]);
        const double n = number(parts[2]);
        if (n < 1 || n != std::floor(n) || !(hi > lo)) {
            throw ConfigError("bins: linear spec needs hi > lo and integer n >= 1");
        }
        for (int i = 0; i <= static_cast<int>(n); ++i) {
            edges.push_back(lo + (hi - lo) * i / n);
        }
    } else {
        std::string_view rest = spec;
        while (true) {
            const auto pos = rest.find(',');
            edges.push_back(number(rest.substr(0, pos)));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
    }
    try {
        check_bin_edges(edges);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("bins: ") + e.what());
    }
    return edges;
}

std::size_t bin_index(std::span<const double> edges, double z) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), z);
    if (it == edges.end()) return edges.size() - 1;
    return static_cast<std::size_t>(it - edges.begin()) - 1;
}

ZHistogram build_histogram(std::span<const double> values, std::span<const double> weights,
                           std::span<const double> edges) {
    check_bin_edges(edges);
    if (values.empty()) {
        throw std::invalid_argument("build_histogram: no entries");
    }
    if (values.size() != weights.size()) {
        throw std::invalid_argument("build_histogram: values and weights differ in length");
    }
    ZHistogram h;
    h.edges.assign(edges.begin(), edges.end());
    const std::size_t nb = edges.size() - 1;
    std::vector<double> sums(nb, 0.0);
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double z = values[k];
        if (!(z >= 0.0)) {
            throw std::invalid_argument("build_histogram: values must be >= 0");
        }
        const std::size_t b = bin_index(edges, z);
        if (b >= nb) {
            h.overflow_weight += weights[k];
        } else {
            sums[b] += weights[k];
        }
        h.total_weight += weights[k];
    }
    if (!(h.total_weight > 0.0)) {
        throw std::invalid_argument("build_histogram: total weight must be positive");
    }
    h.total_pairs = values.size();
    h.density.resize(nb);
    h.uncertainty.assign(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        h.density[b] = sums[b] / h.total_weight / h.width(b);
    }
    return h;
}

ZHistogram build_histogram(std::span<const ComparisonPair> pairs, std::span<const double> edges) {
    std::vector<double> z;
    std::vector<double> w;
    z.reserve(pairs.size());
    w.reserve(pairs.size());
    for (const auto& p : pairs) {
        z.push_back(p.z);
        w.push_back(p.weight);
    }
    return build_histogram(z, w, edges);
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
    if (values.empty() || values.size() != weights.size()) {
        throw std::invalid_argument("weighted_quantile: need matching non-empty inputs");
    }
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    const double target = q * total - 1e-12 * total;
    double cum = 0.0;
    for (std::size_t k : order) {
        cum += weights[k];
        if (cum >= target) {
            return values[k];
        }
    }
    return values[order.back()];
}

SurvivalTable empirical_survival(std::span<const double> values, std::span<const double> weights,
                                 std::span<const double> thresholds) {
    if (values.empty() || values.size() != weights.size()) {
        throw std::invalid_argument("empirical_survival: need matching non-empty inputs");
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    SurvivalTable t;
    t.thresholds.assign(thresholds.begin(), thresholds.end());
    for (double th : thresholds) {
        double above = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (values[k] > th) above += weights[k];
        }
        t.probability.push_back(above / total);
    }
    t.z95 = weighted_quantile(values, weights, 0.95);
    return t;
}

SurvivalTable empirical_survival(std::span<const ComparisonPair> pairs,
                                 std::span<const double> thresholds) {
    std::vector<double> z;
    std::vector<double> w;
    for (const auto& p : pairs) {
        z.push_back(p.z);
        w.push_back(p.weight);
    }
    return empirical_survival(z, w, thresholds);
}

// ---------------------------------------------------------------------------
// Trends
// ---------------------------------------------------------------------------

std::vector<double> default_log10_edges() {
    std::vector<double> e;
    for (int i = 0; i <= 20; ++i) e.push_back(-8.0 + 0.5 * i);
    return e;
}

RelativeUncertaintyDistribution relative_uncertainty_distribution(const Dataset& d,
                                                                  std::span<const double> log10_edges) {
    RelativeUncertaintyDistribution out;
    if (log10_edges.empty()) {
        out.log10_edges = default_log10_edges();
    } else {
        out.log10_edges.assign(log10_edges.begin(), log10_edges.end());
    }
    if (out.log10_edges.size() < 2 ||
        !std::is_sorted(out.log10_edges.begin(), out.log10_edges.end())) {
        throw std::invalid_argument("relative uncertainty edges must ascend");
    }
    out.counts.assign(out.log10_edges.size() - 1, 0.0);
    for (const auto& q : d.quantities) {
        for (const auto& m : q.measurements) {
            const auto r = relative_uncertainty(m);
            if (!r) {
                ++out.excluded_zero_value;
                continue;
            }
            ++out.included;
            out.values.push_back(*r);
            const double lg = std::log10(*r);
            if (lg < out.log10_edges.front()) {
                ++out.underflow;
            } else if (lg >= out.log10_edges.back()) {
                ++out.overflow;
            } else {
                const auto it = std::upper_bound(out.log10_edges.begin(), out.log10_edges.end(), lg);
                out.counts[static_cast<std::size_t>(it - out.log10_edges.begin()) - 1] += 1.0;
            }
        }
    }
    return out;
}

std::vector<double> default_gap_edges() {
    std::vector<double> e;
    for (int i = 0; i <= 12; ++i) e.push_back(5.0 * i);
    return e;
}

namespace {

std::vector<double> gap_edges_or_default(std::span<const double> gap_edges) {
    std::vector<double> e = gap_edges.empty() ? default_gap_edges()
                                              : std::vector<double>(gap_edges.begin(), gap_edges.end());
    check_bin_edges(e);
    return e;
}

struct Buckets {
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> weights;

    explicit Buckets(std::size_t n) : values(n), weights(n) {}

    void medians(std::vector<std::optional<double>>& out, std::vector<std::size_t>& counts) const {
        for (std::size_t b = 0; b < values.size(); ++b) {
            counts.push_back(values[b].size());
            if (values[b].empty()) {
                out.emplace_back();
            } else {
                out.emplace_back(weighted_quantile(values[b], weights[b], 0.5));
            }
        }
    }
};

} // namespace

GapTrend median_z_vs_gap(const Dataset& d, std::span<const double> gap_edges, const PairOptions& options) {
    GapTrend out;
    out.gap_edges = gap_edges_or_default(gap_edges);
    const std::size_t nb = out.gap_edges.size() - 1;
    Buckets buckets(nb);
    for (const auto& p : enumerate_pairs(d, options)) {
        if (!p.year_gap) {
            ++out.skipped_pairs;
            continue;
        }
        const std::size_t b = bin_index(out.gap_edges, *p.year_gap);
        if (b >= nb) {
            ++out.out_of_range;
            continue;
        }
        buckets.values[b].push_back(p.z);
        buckets.weights[b].push_back(p.weight);
    }
    buckets.medians(out.median, out.pair_counts);
    return out;
}

ImprovementTrend uncertainty_improvement(const Dataset& d, std::span<const double> gap_edges,
                                         const PairOptions& options) {
    ImprovementTrend out;
    out.gap_edges = gap_edges_or_default(gap_edges);
    const std::size_t nb = out.gap_edges.size() - 1;
    Buckets buckets(nb);
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& p : enumerate_pairs(d, options)) {
        if (!p.year_gap || !p.newer_older_u_ratio || !(*p.newer_older_u_ratio > 0.0)) {
            ++out.skipped_pairs;
            continue;
        }
        const double gap = *p.year_gap;
        sxy += p.weight * gap * std::log(*p.newer_older_u_ratio);
        sxx += p.weight * gap * gap;
        const std::size_t b = bin_index(out.gap_edges, gap);
        if (b >= nb) continue;
        buckets.values[b].push_back(*p.newer_older_u_ratio);
        buckets.weights[b].push_back(p.weight);
    }
    buckets.medians(out.median_ratio, out.pair_counts);
    if (sxx > 0.0 && sxy < 0.0) {
        out.halving_time_years = -std::log(2.0) * sxx / sxy;
    }

    std::vector<double> improvements;
    for (const auto& q : d.quantities) {
        std::vector<const Measurement*> dated;
        for (const auto& m : q.measurements) {
            if (m.date) dated.push_back(&m);
        }
        std::stable_sort(dated.begin(), dated.end(),
                         [](const Measurement* a, const Measurement* b) { return *a->date < *b->date; });
        double best = std::numeric_limits<double>::infinity();
        std::size_t k = 0;
        while (k < dated.size()) {
            // Measurements sharing a date are not "prior" to each other.
            std::size_t end = k;
            while (end < dated.size() && *dated[end]->date == *dated[k]->date) ++end;
            for (std::size_t i = k; i < end; ++i) {
                const double u = dated[i]->mean_uncertainty();
                if (std::isfinite(best) && u > 0.0) {
                    improvements.push_back(best / u);
                }
            }
            for (std::size_t i = k; i < end; ++i) {
                const double u = dated[i]->mean_uncertainty();
                if (u > 0.0) best = std::min(best, u);
            }
            k = end;
        }
    }
    out.best_over_new_samples = improvements.size();
    if (!improvements.empty()) {
        const std::vector<double> ones(improvements.size(), 1.0);
        out.median_best_over_new = weighted_quantile(improvements, ones, 0.5);
    }
    return out;
}

} // namespace concord
