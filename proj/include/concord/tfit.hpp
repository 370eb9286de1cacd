#pragma once

// Student-t fits to z histograms and the quantity-level bootstrap that
// supplies their bin uncertainties.

#include "concord/comparison.hpp"
#include "concord/measurement.hpp"
#include "concord/statfun.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace concord {

enum class DensityEvaluation {
    bin_center,  ///< 2·S(z) at the bin midpoint
    bin_average, ///< exact folded probability in the bin divided by its width
};

struct FitOptions {
    DensityEvaluation evaluation = DensityEvaluation::bin_center;
    double nu_min = 0.3;
    double nu_max = 1000.0;
    int max_iterations = 500;
    double rel_tol = 1e-10;  ///< relative objective change
    double step_tol = 1e-8;  ///< step norm in (log nu, log sigma)
};

struct TFitResult {
    double nu = 0.0;
    double sigma = 0.0;
    double u_nu = 0.0;
    double u_sigma = 0.0;
    double chi2 = 0.0;
    double chi2_per_dof = 0.0;
    std::size_t n_bins_used = 0;
    std::size_t n_bins_excluded = 0; ///< bins dropped for zero uncertainty
    int iterations = 0;
    bool converged = false;
    bool gaussian_compatible = false; ///< nu pinned at the upper search bound
    double gradient_norm = 0.0;       ///< |∇χ²| in (log nu, log sigma), projected onto the box
};

/// Model density for one bin of a folded (z >= 0) Student-t.
double model_bin_density(const ZHistogram& h, std::size_t bin, double nu, double sigma,
                         DensityEvaluation evaluation);

/// Σ (B_i - model_i)² / u_i² over bins with u_i > 0.
double fit_objective(const ZHistogram& h, double nu, double sigma, const FitOptions& options = {});

/// Nonlinear least-squares fit of (nu, sigma). Throws FitError when fewer
/// than 3 bins carry a positive uncertainty.
TFitResult fit_student_t(const ZHistogram& h, const FitOptions& options = {});

/// Residual callback for the generic (nu, sigma) least-squares solver:
/// fills `out` with weighted residuals for the given parameters.
using ResidualFn = std::function<void(double nu, double sigma, std::vector<double>& out)>;

/// Levenberg-Marquardt in (log nu, log sigma) with multi-start and a
/// Nelder-Mead fallback. `sigma_hint` centres the sigma starting points.
TFitResult least_squares_t(const ResidualFn& residuals, std::size_t n_residuals, double sigma_hint,
                           const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

struct WeightedValue {
    double value = 0.0;
    double weight = 0.0;
};

/// One group per quantity; the bootstrap resamples whole groups.
using SampleGroups = std::vector<std::vector<WeightedValue>>;

SampleGroups pair_groups(const Dataset& d, const PairOptions& options = {});
/// h scores per quantity, each measurement weighted 1.
SampleGroups h_groups(const Dataset& d);

ZHistogram histogram_of_groups(const SampleGroups& groups, std::span<const double> edges);

struct BootstrapOptions {
    std::size_t replicas = 1000;
    RngSeed seed;
    bool refit = false; ///< fit every replica to estimate parameter spread
    FitOptions fit;
};

struct ParamSpread {
    double nu = 0.0;
    double sigma = 0.0;
    std::size_t fits = 0;
};

struct BootstrapResult {
    std::size_t n_replicas = 0;
    std::vector<double> per_bin_sigma;
    std::vector<double> per_bin_mean;
    std::optional<ParamSpread> param_spread;
};

BootstrapResult bootstrap_groups(const SampleGroups& groups, std::span<const double> edges,
                                 const BootstrapOptions& options = {});
BootstrapResult bootstrap(const Dataset& d, std::span<const double> edges,
                          const PairOptions& pairs = {}, const BootstrapOptions& options = {});

// ---------------------------------------------------------------------------
// Whole pipeline
// ---------------------------------------------------------------------------

struct AnalysisConfig {
    std::vector<double> edges = default_bin_edges();
    PairOptions pairs;
    std::size_t replicas = 1000;
    RngSeed seed;
    bool h_scores = false;
    bool refit_replicas = false;
    FitOptions fit;
    std::vector<double> thresholds{1.0, 2.0, 3.0, 5.0, 10.0};
};

struct DistributionFit {
    ZHistogram histogram; ///< uncertainty filled from the bootstrap
    BootstrapResult bootstrap;
    TFitResult fit;
    SurvivalTable survival;
    double p_normal_z95 = 0.0;
    std::size_t entries = 0;
};

/// bootstrap → histogram → fit → survival for pre-grouped samples.
DistributionFit analyze_groups(const SampleGroups& groups, const AnalysisConfig& config);

struct FitReport {
    std::size_t quantities = 0;
    std::size_t measurements = 0;
    std::size_t pairs = 0;
    DistributionFit z;
    std::optional<DistributionFit> h;
};

FitReport fit_report(const Dataset& d, const AnalysisConfig& config = {});

} // namespace concord
