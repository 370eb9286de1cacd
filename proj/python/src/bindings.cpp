#include "concord/cli.hpp"
#include "concord/comparison.hpp"
#include "concord/error.hpp"
#include "concord/genesis.hpp"
#include "concord/measurement.hpp"
#include "concord/report.hpp"
#include "concord/statfun.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <tuple>

namespace py = pybind11;
using namespace concord;

namespace {

Measurement to_measurement(const std::tuple<double, double, double>& m) {
    return {std::get<0>(m), std::get<1>(m), std::get<2>(m), {}, {}};
}

// Reports cross the boundary as JSON text; the package decodes them.
std::string analyze_text(const std::string& text, const std::string& format, const std::string& config) {
    const auto d = parse_dataset(text, data_format_from_string(format));
    AnalysisSettings s;
    if (!config.empty()) apply_config(s, Json::parse(config));
    return run_analysis(d, s).report.dump();
}

std::string genesis_text(std::size_t n_m, double alpha, std::optional<double> chi2_max, double sigma_floor) {
    const GenesisSpec g{n_m, alpha, chi2_max, sigma_floor};
    return to_json(genesis_fit(g), g).dump();
}

std::string simulate_text(const std::string& config, const std::string& format) {
    return serialize_dataset(simulate_dataset(sim_spec_from_json(Json::parse(config))), data_format_from_string(format));
}

std::tuple<int, std::string, std::string> cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Normalized-difference statistics for repeated measurements";

    auto error = py::register_exception<Error>(m, "Error");
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
    py::register_exception<FitError>(m, "FitError", error.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());

    m.def(
        "survival", [](const std::string& dist, double z) { return survival(parse_distribution(dist), z); },
        py::arg("dist"), py::arg("z"), "Chance of |deviation| > z under a law such as 'normal' or 't:2.75:1.05'.");
    m.def(
        "inverse_survival",
        [](const std::string& dist, double p) { return inverse_survival(parse_distribution(dist), p); },
        py::arg("dist"), py::arg("p"));
    m.def(
        "pdf", [](const std::string& dist, double z) { return pdf(parse_distribution(dist), z); }, py::arg("dist"),
        py::arg("z"));
    m.def("student_t_pdf", &student_t_pdf, py::arg("z"), py::arg("nu"), py::arg("sigma"));

    m.def(
        "pair_z",
        [](const std::tuple<double, double, double>& a, const std::tuple<double, double, double>& b,
           const std::string& mode, double covariance) {
            CombineMode c{combine_kind_from_string(mode), covariance};
            return pair_z(to_measurement(a), to_measurement(b), c);
        },
        py::arg("a"), py::arg("b"), py::arg("mode") = "quadrature", py::arg("covariance") = 0.0,
        "z for two measurements given as (value, u_plus, u_minus).");

    m.def("analyze_text", &analyze_text, py::arg("text"), py::arg("format"), py::arg("config") = "",
          py::call_guard<py::gil_scoped_release>());
    m.def("genesis_text", &genesis_text, py::arg("n_m") = 3, py::arg("alpha") = 1.0,
          py::arg("chi2_max") = std::nullopt, py::arg("sigma_floor") = 1.0);
    m.def("simulate_text", &simulate_text, py::arg("config"), py::arg("format") = "csv",
          py::call_guard<py::gil_scoped_release>());
    m.def("run_cli", &cli, py::arg("args"), py::call_guard<py::gil_scoped_release>());
}
