#include "doctest.h"
#include "support.hpp"

#include "concord/quadrature.hpp"
#include "concord/statfun.hpp"

#include <cmath>
#include <numbers>

using namespace concord;
using doctest::Approx;

TEST_CASE("log_gamma matches libm and closed forms") {
    CHECK(log_gamma(0.5) == Approx(0.5 * std::log(std::numbers::pi)).epsilon(1e-14));
    CHECK(log_gamma(1.0) == Approx(0.0).epsilon(1e-14));
    CHECK(std::abs(log_gamma(1.0)) < 1e-14);
    CHECK(log_gamma(10.0) == Approx(std::log(362880.0)).epsilon(1e-14));
    for (double x : {1e-3, 0.1, 0.7, 1.5, 2.5, 7.3, 33.0, 170.5, 1e4}) {
        CAPTURE(x);
        CHECK(log_gamma(x) == Approx(std::lgamma(x)).epsilon(1e-13));
    }
    CHECK_THROWS_AS(log_gamma(0.0), std::invalid_argument);
}

TEST_CASE("incomplete gamma against closed forms") {
    for (double x : {0.01, 0.3, 1.0, 2.5, 7.0, 30.0}) {
        CAPTURE(x);
        CHECK(gamma_p(1.0, x) == Approx(-std::expm1(-x)).epsilon(1e-13));
        CHECK(gamma_p(0.5, x) == Approx(std::erf(std::sqrt(x))).epsilon(1e-13));
        CHECK(gamma_p(3.0, x) + gamma_q(3.0, x) == Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("chi2_cdf") {
    CHECK(chi2_cdf(0.0, 3.0) == 0.0);
    CHECK(chi2_cdf(2.0, 2.0) == Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
    for (double x : {0.5, 1.0, 4.0}) {
        CHECK(std::abs(chi2_cdf(x, 1.0) - (2.0 * testing::phi_cdf(std::sqrt(x)) - 1.0)) < 1e-10);
    }
    double last = 0.0;
    for (double x = 0.0; x < 60.0; x += 0.25) {
        const double c = chi2_cdf(x, 4.5);
        CHECK(c >= last);
        last = c;
    }
    CHECK(chi2_cdf(400.0, 4.5) == Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(chi2_cdf(-1.0, 2.0), std::invalid_argument);
}

TEST_CASE("incomplete beta against closed forms") {
    for (double x : {0.0, 0.05, 0.3, 0.5, 0.77, 0.99, 1.0}) {
        CAPTURE(x);
        CHECK(beta_inc(2.5, 1.0, x) == Approx(std::pow(x, 2.5)).epsilon(1e-13));
        CHECK(beta_inc(1.0, 3.0, x) == Approx(1.0 - std::pow(1.0 - x, 3.0)).epsilon(1e-13));
        CHECK(beta_inc(0.5, 0.5, x) ==
              Approx(2.0 / std::numbers::pi * std::asin(std::sqrt(x))).epsilon(1e-12));
    }
}

TEST_CASE("student_t_pdf values") {
    CHECK(student_t_pdf(0.0, 1.0, 1.0) == Approx(1.0 / std::numbers::pi).epsilon(1e-14));
    CHECK(std::abs(student_t_pdf(0.0, 1e6, 1.0) - 1.0 / std::sqrt(2.0 * std::numbers::pi)) < 1e-4);
    // nu = 2 has the closed form (2 + z²)^(-3/2).
    CHECK(std::abs(student_t_pdf(5.0, 2.0, 1.0) - std::pow(2.0 + 25.0, -1.5)) < 1e-10);
    // Folded tail mass beyond 5 from the density equals the survival function.
    const double tail = 2.0 * testing::simpson([](double z) { return student_t_pdf(z, 2.0, 1.0); }, 5.0, 5e3, 400000) +
                        (1.0 - 5e3 / std::sqrt(2.0 + 25e6));
    CHECK(std::abs(tail - survival(DistSpec::student_t(2.0), 5.0)) < 1e-8);
    CHECK_THROWS_AS(student_t_pdf(0.0, std::nan(""), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(student_t_pdf(0.0, 2.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(student_t_pdf(INFINITY, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("student_t_pdf is even and normalized") {
    for (double nu : {0.5, 1.0, 2.0, 3.7, 30.0}) {
        for (double sigma : {0.3, 1.0, 2.5}) {
            CAPTURE(nu);
            CAPTURE(sigma);
            for (double z : {0.1, 1.0, 7.0}) CHECK(student_t_pdf(z, nu, sigma) == student_t_pdf(-z, nu, sigma));
            auto f = [=](double z) { return student_t_pdf(z, nu, sigma); };
            const double whole = 2.0 * integrate_to_infinity(f, 0.0, sigma).value;
            CHECK(std::abs(whole - 1.0) < 1e-8);
            if (nu >= 1.0) {
                // The ±200σ√ν window misses the two-sided tail beyond it.
                const double edge = 200.0 * sigma * std::sqrt(nu);
                const double window = 2.0 * integrate(f, 0.0, edge).value;
                CHECK(std::abs(window - (1.0 - survival(DistSpec::student_t(nu, sigma), edge))) < 1e-9);
                if (nu >= 3.0) CHECK(std::abs(window - 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("student_t_pdf power-law tail") {
    for (double nu : {0.7, 1.0, 2.0, 3.3, 6.0}) {
        const double sigma = 1.3;
        const double z1 = 1e4 * sigma * std::sqrt(nu);
        const double z2 = 10.0 * z1;
        const double slope = (std::log(student_t_pdf(z2, nu, sigma)) - std::log(student_t_pdf(z1, nu, sigma))) /
                             (std::log(z2) - std::log(z1));
        CAPTURE(nu);
        CHECK(std::abs(slope + (nu + 1.0)) < 0.01 * (nu + 1.0));
    }
}

TEST_CASE("survival reference values") {
    CHECK(survival(DistSpec::normal(), 3.0) == Approx(0.0027).epsilon(0.02));
    CHECK(survival(DistSpec::normal(), 3.0) == Approx(std::erfc(3.0 / std::numbers::sqrt2)).epsilon(1e-14));
    for (double z : {0.5, 1.0, 5.0, 40.0}) {
        CHECK(survival(DistSpec::student_t(2.0), z) == Approx(1.0 - z / std::sqrt(z * z + 2.0)).epsilon(1e-12));
        CHECK(survival(DistSpec::cauchy(), z) == Approx(1.0 - 2.0 / std::numbers::pi * std::atan(z)).epsilon(1e-12));
        CHECK(survival(DistSpec::student_t(1.0), z) == Approx(survival(DistSpec::cauchy(), z)).epsilon(1e-12));
        CHECK(survival(DistSpec::exponential(2.0), z) == Approx(std::exp(-z / 2.0)).epsilon(1e-14));
    }
    CHECK(survival(DistSpec::student_t(2.0), 5.0) == Approx(0.0377).epsilon(1e-3));
    CHECK(survival(DistSpec::cauchy(), 1.0) == Approx(0.5).epsilon(1e-14));
    CHECK(survival(DistSpec::normal(), 0.0) == 1.0);
    CHECK_THROWS_AS(survival(DistSpec::normal(), -0.1), std::invalid_argument);
}

TEST_CASE("inverse_survival") {
    CHECK(inverse_survival(DistSpec::normal(), 0.05) == Approx(1.959963984540054).epsilon(1e-12));
    CHECK(std::abs(inverse_survival(DistSpec::cauchy(), 0.05) - 12.7) < 0.1);
    CHECK(inverse_survival(DistSpec::student_t(2.0), 0.05) == Approx(4.303).epsilon(1e-3));
    const DistSpec laws[] = {DistSpec::normal(1.5), DistSpec::cauchy(0.7), DistSpec::exponential(2.0),
                             DistSpec::student_t(0.8), DistSpec::student_t(2.75, 1.05), DistSpec::student_t(50.0)};
    for (const auto& d : laws) {
        for (double z : {0.01, 0.3, 1.0, 2.0, 5.0, 12.0}) {
            CAPTURE(to_string(d.kind));
            CAPTURE(z);
            const double p = survival(d, z);
            if (p <= 0.0 || p >= 1.0) continue;
            CHECK(std::abs(inverse_survival(d, p) - z) < 1e-8 * std::max(1.0, z));
            CHECK(survival(d, inverse_survival(d, p)) == Approx(p).epsilon(1e-10));
        }
    }
    CHECK_THROWS_AS(inverse_survival(DistSpec::normal(), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(inverse_survival(DistSpec::normal(), 1.0), std::invalid_argument);
}

TEST_CASE("distribution specs validate") {
    CHECK_THROWS_AS(DistSpec::student_t(0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(DistSpec::normal(-1.0).validate(), std::invalid_argument);
    CHECK(dist_kind_from_string("cauchy") == DistKind::cauchy);
    CHECK_THROWS_AS(dist_kind_from_string("levy"), std::invalid_argument);
}

TEST_CASE("sampling") {
    SUBCASE("normal moments") {
        const auto x = sample(DistSpec::normal(), 100000, RngSeed{3});
        CHECK(std::abs(testing::mean(x)) < 0.02);
        CHECK(std::abs(testing::stddev(x) - 1.0) < 0.02);
    }
    SUBCASE("t(2) tail fraction") {
        const auto x = sample(DistSpec::student_t(2.0), 100000, RngSeed{4});
        std::size_t beyond = 0;
        for (double v : x) beyond += std::abs(v) > 5.0;
        CHECK(std::abs(beyond / 1e5 - 0.0377) < 0.003);
    }
    SUBCASE("scaled inverse chi-squared mean") {
        const auto x = sample(ScaledInvChi2{8.0, 1.5}, 200000, RngSeed{5});
        // E[t²] = nu tau² / (nu - 2); sd of the mean is about 0.005 here.
        CHECK(std::abs(testing::mean(x) - 8.0 * 2.25 / 6.0) < 0.03);
    }
    SUBCASE("determinism") {
        CHECK(sample(DistSpec::cauchy(), 1000, RngSeed{9}) == sample(DistSpec::cauchy(), 1000, RngSeed{9}));
        CHECK(sample(DistSpec::cauchy(), 1000, RngSeed{9}) != sample(DistSpec::cauchy(), 1000, RngSeed{10}));
        CHECK(derive_seed(RngSeed{1}, 0) != derive_seed(RngSeed{1}, 1));
        CHECK(derive_seed(RngSeed{1}, 7) == derive_seed(RngSeed{1}, 7));
    }
    SUBCASE("invalid specs") {
        CHECK_THROWS_AS(sample(DistSpec::normal(), 0, RngSeed{}), std::invalid_argument);
        CHECK_THROWS_AS(sample(DistSpec::student_t(-1.0), 10, RngSeed{}), std::invalid_argument);
        CHECK_THROWS_AS(sample(ScaledInvChi2{0.0, 1.0}, 10, RngSeed{}), std::invalid_argument);
    }
}

TEST_CASE("quadrature") {
    const auto r = integrate([](double x) { return std::sin(x); }, 0.0, std::numbers::pi);
    CHECK(r.converged);
    CHECK(r.value == Approx(2.0).epsilon(1e-12));
    const auto g = integrate_to_infinity([](double x) { return std::exp(-x * x); }, 0.0, 1.0);
    CHECK(g.value == Approx(0.5 * std::sqrt(std::numbers::pi)).epsilon(1e-11));
    const auto p = integrate_to_infinity([](double x) { return 1.0 / (x * x); }, 1.0, 1.0);
    CHECK(p.value == Approx(1.0).epsilon(1e-10));
}
