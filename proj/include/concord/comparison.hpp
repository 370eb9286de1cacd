#pragma once

// Pairwise and mean-referenced normalized differences, weighted histograms,
// survival tables, heterogeneity and the time/precision trend analyses.

#include "concord/measurement.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace concord {

enum class CombineKind { quadrature, linear, covariance };

/// How two uncertainties combine in the denominator of z.
struct CombineMode {
    CombineKind kind = CombineKind::quadrature;
    double covariance = 0.0; ///< cov(x_i, x_j); only read for CombineKind::covariance

    static CombineMode quadrature() { return {CombineKind::quadrature, 0.0}; }
    static CombineMode linear() { return {CombineKind::linear, 0.0}; }
    static CombineMode with_covariance(double c) { return {CombineKind::covariance, c}; }
};

std::string to_string(CombineKind kind);
CombineKind combine_kind_from_string(std::string_view name);

/// Per-pair weighting: Q (each quantity totals 1), M (each quantity totals
/// its measurement count), P (each pair counts 1).
enum class Weighting { quantities, measurements, permutations };

std::string to_string(Weighting w);   // "Q" / "M" / "P"
Weighting weighting_from_string(std::string_view name);

struct PairOptions {
    CombineMode mode;
    Weighting weighting = Weighting::measurements;
    /// Drop pairs whose two measurements carry the same source_id.
    bool exclude_shared_source = false;
};

struct ComparisonPair {
    double z = 0.0;
    double weight = 0.0;
    std::string quantity_id;
    std::size_t first = 0;
    std::size_t second = 0;
    std::optional<double> year_gap;
    /// Relative uncertainty of the newer measurement over that of the older.
    std::optional<double> newer_older_u_ratio;
};

/// Normalized difference |a - b| / u_ab. Each side contributes the
/// uncertainty on the side facing the other value. Throws ValidationError
/// when the combined denominator is not positive.
double pair_z(const Measurement& a, const Measurement& b, CombineMode mode = {});

/// All N(N-1)/2 unordered pairs of one quantity.
std::vector<ComparisonPair> enumerate_pairs(const Quantity& q, const PairOptions& options = {});
std::vector<ComparisonPair> enumerate_pairs(const Dataset& d, const PairOptions& options = {});

// ---------------------------------------------------------------------------
// Weighted mean, h scores and consistency
// ---------------------------------------------------------------------------

struct WeightedMean {
    double mean = 0.0;
    double uncertainty = 0.0;
    /// Per-measurement uncertainty actually used (side facing the mean).
    std::vector<double> used_uncertainty;
};

/// Inverse-variance weighted mean. Asymmetric measurements use the side
/// facing the mean, found by fixed-point iteration.
WeightedMean weighted_mean(const Quantity& q);

struct HScore {
    std::size_t index = 0;
    double h = 0.0;
};

std::vector<HScore> h_scores(const Quantity& q);

struct Consistency {
    double chi2 = 0.0;
    std::size_t dof = 0;
    double i2 = 0.0; ///< max(0, 1 - dof/chi2)
};

Consistency consistency_chi2(const Quantity& q);

// ---------------------------------------------------------------------------
// Histograms and survival
// ---------------------------------------------------------------------------

struct ZHistogram {
    std::vector<double> edges;       ///< ascending, edges.front() == 0
    std::vector<double> density;     ///< probability per unit z, per bin
    std::vector<double> uncertainty; ///< per-bin standard uncertainty (bootstrap), else 0
    std::size_t total_pairs = 0;
    double total_weight = 0.0;
    double overflow_weight = 0.0;    ///< weight with z >= edges.back()

    std::size_t bins() const { return density.size(); }
    double width(std::size_t i) const { return edges[i + 1] - edges[i]; }
    double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
    double overflow_probability() const {
        return total_weight > 0.0 ? overflow_weight / total_weight : 0.0;
    }
    /// Σ density·width + overflow probability (1 up to rounding).
    double total_probability() const;
};

/// Default binning: 0.2 wide on [0,3), 0.5 on [3,6), 1 on [6,10), then 8
/// log-spaced edges up to 100.
std::vector<double> default_bin_edges();

/// "default", a comma-separated ascending edge list, or "linear:lo:hi:n".
std::vector<double> parse_bin_spec(std::string_view spec);

/// Throws std::invalid_argument unless edges start at 0 and strictly ascend.
void check_bin_edges(std::span<const double> edges);

/// Index of the bin holding z, or bins() for overflow.
std::size_t bin_index(std::span<const double> edges, double z);

ZHistogram build_histogram(std::span<const ComparisonPair> pairs, std::span<const double> edges);
ZHistogram build_histogram(std::span<const double> values, std::span<const double> weights,
                           std::span<const double> edges);

/// Smallest value whose cumulative weight reaches q of the total.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

struct SurvivalTable {
    std::vector<double> thresholds;
    std::vector<double> probability; ///< weighted fraction with z > threshold
    double z95 = 0.0;                ///< bounds 95% of the total weight
};

SurvivalTable empirical_survival(std::span<const ComparisonPair> pairs,
                                 std::span<const double> thresholds);
SurvivalTable empirical_survival(std::span<const double> values, std::span<const double> weights,
                                 std::span<const double> thresholds);

// ---------------------------------------------------------------------------
// Dataset-level trends
// ---------------------------------------------------------------------------

struct RelativeUncertaintyDistribution {
    std::vector<double> log10_edges;
    std::vector<double> counts;
    std::size_t underflow = 0;
    std::size_t overflow = 0;
    std::size_t included = 0;
    std::size_t excluded_zero_value = 0;
    std::vector<double> values; ///< u/|x| per included measurement, dataset order
};

std::vector<double> default_log10_edges();

/// Histogram of log10(u/|x|), u the mean of both sides; zero values excluded.
RelativeUncertaintyDistribution relative_uncertainty_distribution(
    const Dataset& d, std::span<const double> log10_edges = {});

std::vector<double> default_gap_edges();

struct GapTrend {
    std::vector<double> gap_edges;
    std::vector<std::optional<double>> median; ///< absent when the bucket is empty
    std::vector<std::size_t> pair_counts;
    std::size_t skipped_pairs = 0;  ///< pairs lacking a date on either side
    std::size_t out_of_range = 0;   ///< dated pairs beyond the last edge
};

GapTrend median_z_vs_gap(const Dataset& d, std::span<const double> gap_edges = {},
                         const PairOptions& options = {});

struct ImprovementTrend {
    std::vector<double> gap_edges;
    std::vector<std::optional<double>> median_ratio; ///< newer/older relative uncertainty
    std::vector<std::size_t> pair_counts;
    std::size_t skipped_pairs = 0;
    /// Median over measurements of (smallest earlier u) / u.
    std::optional<double> median_best_over_new;
    std::size_t best_over_new_samples = 0;
    /// Years for the relative uncertainty to halve, from a weighted
    /// log-ratio-vs-gap fit through the origin; absent if not improving.
    std::optional<double> halving_time_years;
};

ImprovementTrend uncertainty_improvement(const Dataset& d, std::span<const double> gap_edges = {},
                                         const PairOptions& options = {});

} // namespace concord
