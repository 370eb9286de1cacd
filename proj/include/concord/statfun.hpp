#pragma once

// Special functions, reference distributions and seeded variate generation.

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace concord {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// ln Γ(x) for x > 0, accurate to roughly 15 significant digits.
double log_gamma(double x);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

/// Regularized incomplete beta I_x(a, b).
double beta_inc(double a, double b, double x);

/// Standard normal CDF.
double normal_cdf(double x);

/// Cumulative chi-squared distribution with `nu` degrees of freedom.
double chi2_cdf(double x, double nu);

// ---------------------------------------------------------------------------
// Reference distributions
// ---------------------------------------------------------------------------

enum class DistKind { normal, cauchy, student_t, exponential };

std::string to_string(DistKind kind);
DistKind dist_kind_from_string(const std::string& name);

/// A zero-centred reference law with scale `sigma`; `nu` is only meaningful
/// for the Student-t kind.
struct DistSpec {
    DistKind kind = DistKind::normal;
    double nu = 0.0;
    double sigma = 1.0;

    static DistSpec normal(double sigma = 1.0) { return {DistKind::normal, 0.0, sigma}; }
    static DistSpec cauchy(double sigma = 1.0) { return {DistKind::cauchy, 0.0, sigma}; }
    static DistSpec student_t(double nu, double sigma = 1.0) { return {DistKind::student_t, nu, sigma}; }
    static DistSpec exponential(double sigma = 1.0) { return {DistKind::exponential, 0.0, sigma}; }

    /// Throws std::invalid_argument when the parameters are unusable.
    void validate() const;

    bool operator==(const DistSpec&) const = default;
};

/// Non-standardized Student-t density S_{nu,sigma}(z).
double student_t_pdf(double z, double nu, double sigma);

/// Density of the law at z (exponential is one-sided on z >= 0).
double pdf(const DistSpec& dist, double z);

/// Chance of a deviation larger than z: two-sided for the symmetric laws,
/// exp(-z/sigma) for the exponential.
double survival(const DistSpec& dist, double z);

/// The z with survival(dist, z) == p, for p in (0, 1).
double inverse_survival(const DistSpec& dist, double p);

// ---------------------------------------------------------------------------
// Random variates
// ---------------------------------------------------------------------------

struct RngSeed {
    std::uint64_t value = 42;

    bool operator==(const RngSeed&) const = default;
};

/// Independent substream seed for (base, stream); used to give every
/// replica or grid point its own generator regardless of scheduling.
RngSeed derive_seed(RngSeed base, std::uint64_t stream);

/// t² ~ scaled-inverse-χ²(nu, tau²), i.e. t² = nu·tau² / χ²_nu.
struct ScaledInvChi2 {
    double nu = 1.0;
    double tau = 1.0;
};

using SampleSpec = std::variant<DistSpec, ScaledInvChi2>;

/// Single-owner variate source. Same seed and call sequence give the same
/// stream.
class Sampler {
public:
    explicit Sampler(RngSeed seed) : engine_(seed.value) {}

    double uniform();                       // [0, 1)
    std::size_t uniform_index(std::size_t n); // [0, n)
    double standard_normal();
    double chi_squared(double nu);

    double draw(const DistSpec& dist);
    /// Draws t² from the scaled inverse chi-squared law.
    double draw(const ScaledInvChi2& spec);
    double draw(const SampleSpec& spec);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

std::vector<double> sample(const SampleSpec& spec, std::size_t n, RngSeed seed);

} // namespace concord
