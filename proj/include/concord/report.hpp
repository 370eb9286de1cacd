#pragma once

// JSON report assembly, theoretical survival rows and config (de)serialization
// shared by the command-line tool and the Python bindings.

#include "concord/comparison.hpp"
#include "concord/genesis.hpp"
#include "concord/measurement.hpp"
#include "concord/statfun.hpp"
#include "concord/tfit.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace concord {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolName = "concord";
inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,     ///< unreadable input or bad configuration
    kExitValidation = 2, ///< dataset failed validation
    kExitFit = 3,        ///< a fit did not converge (report still written)
};

// ---------------------------------------------------------------------------
// Survival tables
// ---------------------------------------------------------------------------

std::vector<double> default_thresholds(); // 1, 2, 3, 5, 10

struct SurvivalRow {
    std::string label;
    std::vector<double> probability;
    double z95 = 0.0;
    double p_normal_z95 = 0.0;
};

/// Normal, t(10), exponential, t(2) and Cauchy, in that order.
std::vector<DistSpec> reference_distributions();
std::string distribution_label(const DistSpec& dist);
/// "normal", "exponential", "cauchy", "t:<nu>", optionally ":<sigma>".
DistSpec parse_distribution(std::string_view text);

SurvivalRow theoretical_row(const DistSpec& dist, std::span<const double> thresholds);
SurvivalRow observed_row(std::string label, const SurvivalTable& table);

Json survival_table_json(std::span<const double> thresholds, std::span<const SurvivalRow> rows);

// ---------------------------------------------------------------------------
// Pieces
// ---------------------------------------------------------------------------

Json to_json(const ZHistogram& h, Weighting weighting);
Json to_json(const TFitResult& fit);
Json to_json(const BootstrapResult& b);
Json to_json(const DistributionFit& d, Weighting weighting, std::string_view statistic);
Json to_json(const ValidationReport& report);
Json to_json(const GapTrend& trend);
Json to_json(const ImprovementTrend& trend);
Json to_json(const RelativeUncertaintyDistribution& dist);
Json to_json(const DeconvolveResult& r);
Json to_json(const GenesisFit& g, const GenesisSpec& spec);

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// Analysis settings as the user gave them; `bins` is the unparsed spec.
struct AnalysisSettings {
    std::string bins = "default";
    Weighting weighting = Weighting::measurements;
    CombineKind mode = CombineKind::quadrature;
    double covariance = 0.0;
    std::size_t replicas = 1000;
    RngSeed seed;
    bool exclude_shared_source = false;
    bool h_scores = false;
    bool refit_replicas = false;

    AnalysisConfig resolve() const;
};

Json to_json(const AnalysisSettings& s);
/// Applies the keys present in `config` over `s`. Unknown keys or wrong
/// types throw ConfigError naming the key.
void apply_config(AnalysisSettings& s, const Json& config);

Json to_json(const SimSpec& spec);
SimSpec sim_spec_from_json(const Json& config);

Json to_json(const GenesisSpec& spec);
GenesisSpec genesis_spec_from_json(const Json& config);

/// Reads a JSON object from a file; throws Error when unreadable or malformed.
Json load_json_file(const std::string& path);

// ---------------------------------------------------------------------------
// Whole analysis
// ---------------------------------------------------------------------------

struct AnalysisOutcome {
    Json report;
    int exit_code = kExitOk;
};

/// validate → pairs → bootstrap → histogram → fit → survival → trends.
AnalysisOutcome run_analysis(const Dataset& d, const AnalysisSettings& settings);

} // namespace concord
