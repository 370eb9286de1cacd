#pragma once

// Synthetic datasets, Monte Carlo deconvolution of pair distributions,
// bound-constrained resimulation and the scale-mixture model of how
// unfound systematic errors produce heavy tails.

#include "concord/comparison.hpp"
#include "concord/measurement.hpp"
#include "concord/statfun.hpp"
#include "concord/tfit.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace concord {

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Measurements per quantity, uniform on [min, max].
struct CountRule {
    std::size_t min = 5;
    std::size_t max = 5;
};

/// Reported uncertainty, log-uniform on [min, max]. With `relative` set the
/// draw is a fraction of |true value|.
struct UncertaintyRule {
    double min = 1.0;
    double max = 1.0;
    bool relative = false;
};

struct ValueRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct SimBounds {
    std::optional<double> lower;
    std::optional<double> upper;

    bool contains(double x) const {
        return (!lower || x >= *lower) && (!upper || x <= *upper);
    }
};

struct DateRange {
    Date first{1950, 1, 1};
    Date last{2020, 12, 31};
};

struct SimSpec {
    std::size_t n_quantities = 1000;
    CountRule measurements_per_quantity;
    /// Error in units of the reported uncertainty. An exponential law is
    /// applied with a random sign (Laplace errors).
    DistSpec error_law = DistSpec::normal();
    UncertaintyRule reported_u;
    ValueRange true_value;
    /// Values outside are redrawn until they land inside.
    std::optional<SimBounds> bounds;
    std::optional<DateRange> date_range;
    RngSeed seed;

    /// Throws ValidationError naming the offending field.
    void validate() const;
};

Dataset simulate_dataset(const SimSpec& spec);

/// One error draw from `law`, signed for the one-sided exponential.
double draw_error(Sampler& sampler, const DistSpec& law);

// ---------------------------------------------------------------------------
// Deconvolution
// ---------------------------------------------------------------------------

struct DeconvolveOptions {
    std::vector<double> nu_grid;    ///< empty: 24 log-spaced points on [0.5, 20]
    std::vector<double> sigma_grid; ///< empty: 0.3, 0.4, ..., 3.0
    std::size_t target_pairs = 200000;
    Weighting weighting = Weighting::measurements;
    bool refine = true;
    RngSeed seed;
};

struct DeconvolveResult {
    double nu_x = 0.0;
    double sigma_x = 0.0;
    double chi2 = 0.0;
    double grid_nu = 0.0;     ///< best grid point before refinement
    double grid_sigma = 0.0;
    double grid_chi2 = 0.0;
    bool on_boundary = false; ///< grid minimum sits on an edge of the grid
    std::size_t bins_used = 0;
    std::size_t simulated_pairs = 0;
};

/// Finds the individual-measurement law t(nu_x, sigma_x) whose simulated
/// pair histogram (same quantity multiplicities, unit uncertainties) best
/// matches `observed`, scored by Σ (B_obs - B_sim)² / u_obs².
DeconvolveResult deconvolve(const ZHistogram& observed, std::span<const std::size_t> multiplicities,
                            const DeconvolveOptions& options = {});

/// Objective used by deconvolve() at one (nu_x, sigma_x).
double deconvolution_objective(const ZHistogram& observed, std::span<const std::size_t> multiplicities,
                               double nu_x, double sigma_x, const DeconvolveOptions& options = {});

std::vector<double> default_deconvolution_nu_grid();
std::vector<double> default_deconvolution_sigma_grid();

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

struct BoundsEffectOptions {
    DistSpec error_law = DistSpec::normal();
    AnalysisConfig analysis; ///< binning, pairing and bootstrap for both fits
    RngSeed seed;
};

struct BoundsEffect {
    TFitResult unbounded;
    TFitResult bounded;
    double delta_nu = 0.0;    ///< bounded - unbounded
    double delta_sigma = 0.0;
    std::size_t redraws = 0;  ///< rejected draws in the bounded simulation
};

/// Re-simulates `d` around each quantity's weighted mean (clamped into its
/// bounds) with its reported uncertainties, once freely and once subject to
/// `bounds`, using the same underlying draws, and fits both.
BoundsEffect bounds_effect(const Dataset& d, std::span<const SimBounds> bounds,
                           const BoundsEffectOptions& options = {});
/// As above with the bounds stored on each quantity.
BoundsEffect bounds_effect(const Dataset& d, const BoundsEffectOptions& options = {});

// ---------------------------------------------------------------------------
// Scale mixtures
// ---------------------------------------------------------------------------

/// Parameters of the unfound-error model f(t) = t^-alpha · F(chi2_max/t²; n_m-1)
/// on [sigma_floor, ∞).
struct GenesisSpec {
    std::size_t n_m = 3;
    double alpha = 1.0;
    std::optional<double> chi2_max; ///< defaults to n_m - 1
    double sigma_floor = 1.0;

    double threshold() const { return chi2_max.value_or(static_cast<double>(n_m) - 1.0); }
    void validate() const;
};

namespace prior {

struct PointMass {
    double t = 1.0;
};

/// t² ~ scaled-inverse-χ²(nu, tau²).
struct ScaledInvChi2 {
    double nu = 1.0;
    double tau = 1.0;
};

/// Normal in t, truncated to t > 0.
struct Normal {
    double mean = 0.0;
    double sd = 1.0;
};

/// t^-alpha on [t_min, t_max].
struct PowerLaw {
    double alpha = 2.0;
    double t_min = 1.0;
    std::optional<double> t_max;
};

struct UnfoundError {
    GenesisSpec spec;
};

} // namespace prior

using Prior = std::variant<prior::PointMass, prior::ScaledInvChi2, prior::Normal, prior::PowerLaw,
                           prior::UnfoundError>;

/// Normalized prior density f(t). Throws std::invalid_argument when the
/// prior cannot be normalized.
double prior_density(const Prior& f, double t);

/// P(x) = ∫ f(t) φ(x/t)/t dt, relative accuracy about 1e-8.
double mixture_density(const Prior& f, double x);

/// t^-alpha · F(chi2_max/t²; n_m - 1), unnormalized. Throws for t <= 0.
double unfound_error_density(double t, const GenesisSpec& g);

struct GenesisFit {
    double effective_nu = 0.0;
    double sigma = 0.0;
    double asymptotic_nu = 0.0; ///< n_m - 2 + alpha from the power-law tail
    double rms_log_residual = 0.0;
    TFitResult fit;
};

/// Fits a Student-t to log P(z) on z = 0, 0.1, ..., 20 for the unfound-error
/// mixture.
GenesisFit genesis_fit(const GenesisSpec& g);
double genesis_tail_exponent(const GenesisSpec& g);

} // namespace concord
