#pragma once

// Domain types for published measurements, dataset I/O and the rules that
// turn reported intervals into standard uncertainties.

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace concord {

/// Calendar date (proleptic Gregorian).
struct Date {
    int year = 1970;
    unsigned month = 1;
    unsigned day = 1;

    /// Parses `YYYY-MM-DD`; nullopt when malformed or not a real day.
    static std::optional<Date> parse(std::string_view text);
    std::string iso() const;
    /// Days since 1970-01-01.
    long days() const;

    auto operator<=>(const Date&) const = default;
};

/// Absolute difference between two dates in (mean Gregorian) years.
double years_between(const Date& a, const Date& b);

struct Measurement {
    double value = 0.0;
    double u_plus = 0.0;  ///< upper-side standard uncertainty
    double u_minus = 0.0; ///< lower-side standard uncertainty
    std::optional<Date> date;
    std::optional<std::string> source_id;

    static Measurement symmetric(double value, double u) { return {value, u, u, {}, {}}; }

    bool symmetric_uncertainty() const { return u_plus == u_minus; }
    /// Mean of the two sides; used wherever a single width is needed.
    double mean_uncertainty() const { return 0.5 * (u_plus + u_minus); }

    bool operator==(const Measurement&) const = default;
};

struct Quantity {
    std::string id;
    std::vector<Measurement> measurements;
    std::optional<double> lower_bound;
    std::optional<double> upper_bound;

    bool operator==(const Quantity&) const = default;
};

struct Dataset {
    std::string name;
    std::vector<Quantity> quantities;

    std::size_t measurement_count() const;
    const Quantity* find(std::string_view id) const;

    bool operator==(const Dataset&) const = default;
};

/// Quantities with fewer measurements than this are flagged by validate().
inline constexpr std::size_t kInclusionThreshold = 5;

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

enum class DataFormat { csv, json };

DataFormat data_format_from_string(std::string_view name);
/// Guess from a file extension; csv unless the path ends in `.json`.
DataFormat data_format_from_path(std::string_view path);

/// Throws ParseError (with line number) on malformed text and
/// ValidationError on a negative or all-zero uncertainty.
Dataset parse_dataset(std::string_view text, DataFormat format, std::string name = "dataset");
std::string serialize_dataset(const Dataset& dataset, DataFormat format);

Dataset load_dataset(const std::string& path, std::optional<DataFormat> format = std::nullopt);
void save_dataset(const Dataset& dataset, const std::string& path,
                  std::optional<DataFormat> format = std::nullopt);

// ---------------------------------------------------------------------------
// Uncertainty normalization
// ---------------------------------------------------------------------------

enum class Coverage { k1, k2, ci683, ci95 };

Coverage coverage_from_string(std::string_view name);
/// Factor dividing an interval half-width to give a standard uncertainty.
double coverage_divisor(Coverage coverage);

struct StandardUncertainty {
    double u_plus = 0.0;
    double u_minus = 0.0;
};

/// Converts a reported interval (and/or separately reported components, all
/// quoted at the same coverage) into a standard uncertainty. Every term is
/// divided by the coverage divisor and the terms are summed in quadrature.
StandardUncertainty normalize_uncertainty(std::optional<double> half_width, Coverage coverage,
                                          std::span<const double> components = {});

/// Asymmetric interval version: each side is normalized separately.
StandardUncertainty normalize_uncertainty(double plus_half_width, double minus_half_width,
                                          Coverage coverage);

// ---------------------------------------------------------------------------
// Binomial rates
// ---------------------------------------------------------------------------

enum class BinomialMethod { wilson, clopper_pearson };

struct BinomialInterval {
    double lower = 0.0;
    double upper = 1.0;
};

/// Two-sided confidence interval for a binomial probability k/n.
BinomialInterval binomial_interval(std::size_t k, std::size_t n, double confidence = 0.683,
                                   BinomialMethod method = BinomialMethod::wilson);

/// Difference of two binomial rates k1/n1 - k2/n2 with asymmetric standard
/// uncertainties; each side combines the matching interval sides of both
/// groups in quadrature.
Measurement binomial_rate_difference(std::size_t k1, std::size_t n1, std::size_t k2,
                                     std::size_t n2,
                                     BinomialMethod method = BinomialMethod::wilson,
                                     double confidence = 0.683);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class Severity { warning, error };

struct ValidationIssue {
    Severity severity = Severity::warning;
    std::string kind;
    std::string quantity_id;
    std::optional<std::size_t> measurement_index;
    std::string message;
};

struct QuantitySummary {
    std::string id;
    std::size_t measurements = 0;
    bool below_threshold = false;
};

struct ValidationReport {
    std::vector<QuantitySummary> quantities;
    std::vector<ValidationIssue> issues;

    bool has_errors() const;
    std::size_t count(std::string_view kind) const;
};

/// Reporting only; never throws for data problems.
ValidationReport validate(const Dataset& dataset);

} // namespace concord
