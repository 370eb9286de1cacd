#include "doctest.h"

#include "concord/cli.hpp"
#include "concord/report.hpp"
#include "concord/statfun.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace concord;

namespace {

const std::string kFixtures = CONCORD_FIXTURES;
const std::string kScratch = CONCORD_SCRATCH;

struct Run {
    int code = 0;
    std::string out;
    std::string err;

    Json json() const { return Json::parse(out); }
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string fixture(const std::string& name) {
    return kFixtures + "/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

double total_weight(const Json& report) {
    return report["z"]["histogram"]["total_weight"].get<double>();
}

} // namespace

TEST_CASE("table reproduces the theoretical rows") {
    const auto r = run({"table"});
    REQUIRE(r.code == 0);
    const auto rows = r.json()["table"]["rows"];
    REQUIRE(rows.size() == 5);
    // Printed precision of the reference rows.
    const std::vector<std::vector<double>> printed{{0.32, 0.046, 0.0027, 5.7e-7, 1.5e-23},
                                                   {0.34, 0.073, 0.013, 5.4e-4, 1.6e-6},
                                                   {0.37, 0.14, 0.050, 0.007, 4.5e-5}};
    const std::vector<double> last_digit{0.01, 0.001, 0.0001, 1e-8, 1e-24, 0.01, 0.001, 0.001, 1e-5, 1e-7,
                                         0.01, 0.01, 0.001, 0.001, 1e-6};
    const std::vector<std::string> order{"normal", "t:10", "exponential"};
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(rows[k]["label"] == order[k]);
        for (std::size_t i = 0; i < 5; ++i) {
            CAPTURE(k);
            CAPTURE(i);
            CHECK(std::abs(rows[k]["p"][i].get<double>() - printed[k][i]) <= last_digit[k * 5 + i]);
        }
    }
    CHECK(std::abs(rows[0]["z95"].get<double>() - 1.96) <= 0.01);
}

TEST_CASE("table values come straight from survival()") {
    const auto r = run({"table", "--dist", "t:2.75:1.05", "--dist", "cauchy"});
    REQUIRE(r.code == 0);
    const auto rows = r.json()["table"]["rows"];
    REQUIRE(rows.size() == 2);
    const double z[] = {1.0, 2.0, 3.0, 5.0, 10.0};
    for (int i = 0; i < 5; ++i) {
        CHECK(rows[0]["p"][i].get<double>() == survival(DistSpec::student_t(2.75, 1.05), z[i]));
        CHECK(rows[1]["p"][i].get<double>() == survival(DistSpec::cauchy(), z[i]));
    }
    CHECK(rows[1]["z95"].get<double>() == inverse_survival(DistSpec::cauchy(), 0.05));
    CHECK(run({"table", "--dist", "levy"}).code == 1);
}

TEST_CASE("table with data adds an observed row") {
    const auto r = run({"table", "--input", fixture("small.csv"), "--replicas", "20"});
    REQUIRE(r.code == 0);
    const auto rows = r.json()["table"]["rows"];
    CHECK(rows.size() == 6);
    CHECK(rows.back()["p"].size() == 5);
}

TEST_CASE("analyze reports fixture counts") {
    for (const char* name : {"small.csv", "small.json"}) {
        const auto r = run({"analyze", "--input", fixture(name), "--replicas", "50"});
        CAPTURE(name);
        CHECK((r.code == 0 || r.code == 3));
        const auto j = r.json();
        CHECK(j["dataset"]["quantities"] == 4);
        CHECK(j["dataset"]["measurements"] == 21);
        CHECK(j["dataset"]["pairs"] == 15 + 10 + 3 + 21);
        CHECK(j["seed"] == 42);
        CHECK(j["config"]["replicas"] == 50);
        CHECK(j["z"]["histogram"]["units"] == "probability per unit z");
        CHECK(j["z"]["histogram"]["weighting"] == "M");
        CHECK(j["validation"]["warnings"] == 1);
        CHECK(j.contains("trends"));
    }
}

TEST_CASE("worked example through the CLI") {
    const auto r = run({"analyze", "--input", fixture("worked_example.csv"), "--replicas", "10"});
    const auto j = r.json();
    CHECK(j["dataset"]["pairs"] == 3);
    CHECK(j["validation"]["warnings"] == 1);
    // Three pairs cannot fill three bins with nonzero bootstrap spread.
    CHECK(r.code == 3);
    CHECK(j["z"].contains("error"));
}

TEST_CASE("P weighting favours quantities with many measurements") {
    const auto m = run({"analyze", "--input", fixture("small.csv"), "--replicas", "20", "--weighting", "M"}).json();
    const auto p = run({"analyze", "--input", fixture("small.csv"), "--replicas", "20", "--weighting", "P"}).json();
    // M totals N per quantity, P totals N(N-1)/2.
    CHECK(total_weight(m) == doctest::Approx(21.0));
    CHECK(total_weight(p) == doctest::Approx(49.0));
    CHECK(p["z"]["histogram"]["weighting"] == "P");
    const auto q = run({"analyze", "--input", fixture("small.csv"), "--replicas", "20", "--weighting", "Q"}).json();
    CHECK(total_weight(q) == doctest::Approx(4.0));
}

TEST_CASE("h scores are fitted on request") {
    const auto without = run({"analyze", "--input", fixture("small.csv"), "--replicas", "20"}).json();
    CHECK(!without.contains("h"));
    const auto with = run({"analyze", "--input", fixture("small.csv"), "--replicas", "20", "--h-scores"}).json();
    REQUIRE(with.contains("h"));
    CHECK(with["h"]["statistic"] == "h");
    CHECK(with["config"]["h-scores"] == true);
}

TEST_CASE("config files and flags") {
    const auto r = run({"analyze", "--input", fixture("small.csv"), "--config", fixture("analysis.json")});
    const auto j = r.json();
    CHECK(j["config"]["replicas"] == 200);
    CHECK(j["seed"] == 7);
    const auto flagged = run({"analyze", "--input", fixture("small.csv"), "--config", fixture("analysis.json"),
                              "--seed", "9", "--mode", "linear"}).json();
    CHECK(flagged["seed"] == 9);
    CHECK(flagged["config"]["mode"] == "linear");
    const auto cov = run({"analyze", "--input", fixture("small.csv"), "--replicas", "20", "--cov", "0.01"}).json();
    CHECK(cov["config"]["mode"] == "covariance");
}

TEST_CASE("exit codes") {
    SUBCASE("unknown config key names the key") {
        const auto r = run({"analyze", "--input", fixture("small.csv"), "--config", fixture("bad_config.json")});
        CHECK(r.code == 1);
        CHECK(r.err.find("weigthing") != std::string::npos);
    }
    SUBCASE("unreadable input") {
        const auto r = run({"analyze", "--input", fixture("missing.csv")});
        CHECK(r.code == 1);
        CHECK(r.err.find("missing.csv") != std::string::npos);
    }
    SUBCASE("validation failure") {
        const auto r = run({"analyze", "--input", fixture("invalid.csv"), "--replicas", "10"});
        CHECK(r.code == 2);
        CHECK(r.json()["validation"]["ok"] == false);
        CHECK(run({"validate", "--input", fixture("invalid.csv")}).code == 2);
        CHECK(run({"validate", "--input", fixture("small.csv")}).code == 0);
    }
    SUBCASE("bad flags") {
        CHECK(run({"analyze", "--input", fixture("small.csv"), "--weighting", "X"}).code == 1);
        CHECK(run({"frobnicate"}).code == 1);
        CHECK(run({"genesis", "--n-m", "1"}).code == 1);
        CHECK(run({"analyze", "--input", fixture("small.csv"), "--bins", "3,2"}).code == 1);
    }
    SUBCASE("help") {
        const auto r = run({"--help"});
        CHECK(r.code == 0);
        CHECK(r.out.find("analyze") != std::string::npos);
    }
}

TEST_CASE("genesis command") {
    const auto r = run({"genesis", "--config", fixture("genesis.json")});
    REQUIRE(r.code == 0);
    const auto g = r.json()["genesis"];
    CHECK(g["config"]["n_m"] == 3);
    CHECK(g["asymptotic_nu"].get<double>() == 2.0);
    CHECK(std::abs(g["effective_nu"].get<double>() - 2.0) < 0.3);
    const auto flags = run({"genesis", "--n-m", "4", "--alpha", "0.5"}).json()["genesis"];
    CHECK(flags["config"]["chi2_max"].get<double>() == 3.0);
    CHECK(flags.contains("effective_nu"));
}

TEST_CASE("simulate then analyze via files") {
    const std::string data = kScratch + "/sim_chain.csv";
    std::filesystem::remove(data);
    const auto s = run({"simulate", "--config", fixture("simulate.json"), "--dataset-out", data});
    REQUIRE(s.code == 0);
    CHECK(s.json()["seed"] == 2024);
    REQUIRE(std::filesystem::exists(data));
    const auto a = run({"analyze", "--input", data, "--replicas", "100"});
    REQUIRE(a.code == 0);
    const auto fit = a.json()["z"]["fit"];
    // Cauchy errors give t(1, sqrt 2) pairs.
    CHECK(std::abs(fit["nu"].get<double>() - 1.0) < 3.0 * fit["u_nu"].get<double>() + 0.02);
    CHECK(std::abs(fit["sigma"].get<double>() - std::numbers::sqrt2) < 3.0 * fit["u_sigma"].get<double>() + 0.01);
}

TEST_CASE("simulate defaults its seed to 42") {
    const auto r = run({"simulate", "--seed", "42"});
    const auto d = run({"simulate"});
    REQUIRE(d.code == 0);
    CHECK(d.json()["seed"] == 42);
    CHECK(d.json()["data"]["quantities"].size() == 1000);
    CHECK(d.out == r.out);
}

TEST_CASE("deconvolve command") {
    const std::string data = kScratch + "/deconv.json";
    REQUIRE(run({"simulate", "--config", fixture("simulate.json"), "-d", data, "--format", "json"}).code == 0);
    const auto r = run({"deconvolve", "--input", data, "--replicas", "50", "--target-pairs", "50000"});
    REQUIRE(r.code == 0);
    const auto j = r.json();
    CHECK(j.contains("pair_fit"));
    CHECK(j["deconvolution"].contains("nu_x"));
    CHECK(j["deconvolution"]["nu_x"].get<double>() < j["pair_fit"]["nu"].get<double>() + 0.5);
}

TEST_CASE("reports are byte-identical across runs") {
    const std::vector<std::string> args{"analyze", "--input", fixture("small.csv"), "--replicas", "30", "--h-scores"};
    const auto a = run(args);
    const auto b = run(args);
    CHECK(a.out == b.out);
    const std::string path = kScratch + "/report.json";
    auto with_out = args;
    with_out.insert(with_out.end(), {"--out", path});
    const auto c = run(with_out);
    CHECK(c.out.empty());
    CHECK(slurp(path) == a.out);
    CHECK(run({"genesis"}).out == run({"genesis"}).out);
}
