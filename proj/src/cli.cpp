#include "concord/cli.hpp"

#include "concord/error.hpp"
#include "concord/report.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <fstream>
#include <optional>

namespace concord {

namespace {

struct CommonFlags {
    std::string input;
    std::string format;
    std::string config;
    std::string out;
    std::string weighting;
    std::string mode;
    std::optional<double> cov;
    std::optional<std::size_t> replicas;
    std::optional<std::uint64_t> seed;
    std::string bins;
    bool h_scores = false;
    bool exclude_shared_source = false;
    bool refit = false;
};

void add_input(CLI::App* cmd, CommonFlags& f, bool required) {
    auto* opt = cmd->add_option("--input,-i", f.input, "dataset file (CSV or JSON)");
    if (required) opt->required();
    cmd->add_option("--format", f.format, "input format: csv or json (default: from extension)")
        ->check(CLI::IsMember({"csv", "json"}));
}

void add_analysis(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "JSON file of analysis settings");
    cmd->add_option("--weighting", f.weighting, "pair weighting: Q, M or P");
    cmd->add_option("--mode", f.mode, "uncertainty combination: quadrature or linear");
    cmd->add_option("--cov", f.cov, "covariance of each pair (implies covariance mode)");
    cmd->add_option("--replicas", f.replicas, "bootstrap replicas (default 1000)");
    cmd->add_option("--seed", f.seed, "random seed (default 42)");
    cmd->add_option("--bins", f.bins, "bin edges: default, a comma list, or linear:lo:hi:n");
    cmd->add_flag("--exclude-shared-source", f.exclude_shared_source, "skip pairs sharing a source_id");
}

AnalysisSettings settings_from(const CommonFlags& f) {
    AnalysisSettings s;
    if (!f.config.empty()) apply_config(s, load_json_file(f.config));
    if (!f.bins.empty()) {
        parse_bin_spec(f.bins);
        s.bins = f.bins;
    }
    if (!f.weighting.empty()) s.weighting = weighting_from_string(f.weighting);
    if (!f.mode.empty()) s.mode = combine_kind_from_string(f.mode);
    if (f.cov) {
        s.mode = CombineKind::covariance;
        s.covariance = *f.cov;
    }
    if (f.replicas) s.replicas = *f.replicas;
    if (f.seed) s.seed = {*f.seed};
    if (f.exclude_shared_source) s.exclude_shared_source = true;
    if (f.h_scores) s.h_scores = true;
    if (f.refit) s.refit_replicas = true;
    return s;
}

Dataset read_input(const CommonFlags& f) {
    std::optional<DataFormat> fmt;
    if (!f.format.empty()) fmt = data_format_from_string(f.format);
    return load_dataset(f.input, fmt);
}

void emit(const Json& j, const std::string& path, std::ostream& out) {
    const std::string text = j.dump(2) + "\n";
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw Error("cannot write '" + path + "'");
    file << text;
    if (!file) throw Error("failed writing '" + path + "'");
}

Json tool_header() {
    return {{"name", kToolName}, {"version", kToolVersion}};
}

int cmd_analyze(const CommonFlags& f, std::ostream& out) {
    const auto settings = settings_from(f);
    const auto data = read_input(f);
    const auto outcome = run_analysis(data, settings);
    emit(outcome.report, f.out, out);
    return outcome.exit_code;
}

int cmd_table(const CommonFlags& f, const std::vector<std::string>& dists, std::ostream& out) {
    const auto thresholds = default_thresholds();
    std::vector<SurvivalRow> rows;
    if (dists.empty()) {
        for (const auto& d : reference_distributions()) rows.push_back(theoretical_row(d, thresholds));
    } else {
        for (const auto& d : dists) rows.push_back(theoretical_row(parse_distribution(d), thresholds));
    }
    Json j;
    j["tool"] = tool_header();
    if (!f.input.empty()) {
        const auto settings = settings_from(f);
        const auto config = settings.resolve();
        const auto data = read_input(f);
        const auto pairs = enumerate_pairs(data, config.pairs);
        rows.push_back(observed_row(data.name, empirical_survival(pairs, thresholds)));
        j["config"] = to_json(settings);
    }
    j["table"] = survival_table_json(thresholds, rows);
    emit(j, f.out, out);
    return kExitOk;
}

int cmd_validate(const CommonFlags& f, std::ostream& out) {
    const auto data = read_input(f);
    const auto report = validate(data);
    Json j;
    j["tool"] = tool_header();
    j["dataset"] = {{"name", data.name}, {"quantities", data.quantities.size()},
                    {"measurements", data.measurement_count()}};
    j["validation"] = to_json(report);
    emit(j, f.out, out);
    return report.has_errors() ? kExitValidation : kExitOk;
}

struct SimulateFlags {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
    std::string dataset_out;
    std::string format;
};

int cmd_simulate(const SimulateFlags& f, std::ostream& out) {
    SimSpec spec = f.config.empty() ? SimSpec{} : sim_spec_from_json(load_json_file(f.config));
    if (f.seed) spec.seed = {*f.seed};
    const auto data = simulate_dataset(spec);
    Json j;
    j["tool"] = tool_header();
    j["seed"] = spec.seed.value;
    j["spec"] = to_json(spec);
    j["dataset"] = {{"quantities", data.quantities.size()}, {"measurements", data.measurement_count()}};
    if (!f.dataset_out.empty()) {
        std::optional<DataFormat> fmt;
        if (!f.format.empty()) fmt = data_format_from_string(f.format);
        save_dataset(data, f.dataset_out, fmt);
        j["dataset"]["path"] = f.dataset_out;
    } else {
        j["data"] = Json::parse(serialize_dataset(data, DataFormat::json));
    }
    emit(j, f.out, out);
    return kExitOk;
}

struct GenesisFlags {
    std::string config;
    std::string out;
    std::optional<std::size_t> n_m;
    std::optional<double> alpha;
    std::optional<double> chi2_max;
    std::optional<double> sigma_floor;
};

int cmd_genesis(const GenesisFlags& f, std::ostream& out) {
    GenesisSpec g = f.config.empty() ? GenesisSpec{} : genesis_spec_from_json(load_json_file(f.config));
    if (f.n_m) g.n_m = *f.n_m;
    if (f.alpha) g.alpha = *f.alpha;
    if (f.chi2_max) g.chi2_max = *f.chi2_max;
    if (f.sigma_floor) g.sigma_floor = *f.sigma_floor;
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto fit = genesis_fit(g);
    Json j;
    j["tool"] = tool_header();
    j["genesis"] = to_json(fit, g);
    emit(j, f.out, out);
    return fit.fit.converged ? kExitOk : kExitFit;
}

int cmd_deconvolve(const CommonFlags& f, std::size_t target_pairs, std::ostream& out) {
    const auto settings = settings_from(f);
    const auto config = settings.resolve();
    const auto data = read_input(f);
    Json j;
    j["tool"] = tool_header();
    j["seed"] = settings.seed.value;
    j["config"] = to_json(settings);
    j["config"]["target_pairs"] = target_pairs;
    const auto report = validate(data);
    if (report.has_errors()) {
        j["validation"] = to_json(report);
        emit(j, f.out, out);
        return kExitValidation;
    }
    const auto observed = analyze_groups(pair_groups(data, config.pairs), config);
    std::vector<std::size_t> multiplicities;
    for (const auto& q : data.quantities) multiplicities.push_back(q.measurements.size());
    DeconvolveOptions opts;
    opts.target_pairs = target_pairs;
    opts.weighting = config.pairs.weighting;
    opts.seed = derive_seed(settings.seed, 0xdc);
    const auto result = deconvolve(observed.histogram, multiplicities, opts);
    j["pair_fit"] = to_json(observed.fit);
    j["deconvolution"] = to_json(result);
    emit(j, f.out, out);
    return observed.fit.converged ? kExitOk : kExitFit;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Consistency analysis of repeated measurements: normalized differences, heavy-tail fits "
                 "and error-model simulation.",
                 "concord"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    CommonFlags af;
    auto* analyze = app.add_subcommand("analyze", "fit the z (and optionally h) distribution of a dataset");
    add_input(analyze, af, true);
    add_analysis(analyze, af);
    analyze->add_flag("--h-scores", af.h_scores, "also fit the distribution of h scores");
    analyze->add_flag("--refit", af.refit, "refit every bootstrap replica for parameter spread");
    analyze->add_option("--out,-o", af.out, "write the report here instead of stdout");

    CommonFlags tf;
    std::vector<std::string> dists;
    auto* table = app.add_subcommand("table", "survival probabilities of reference laws and, given data, observed");
    add_input(table, tf, false);
    add_analysis(table, tf);
    table->add_option("--dist", dists, "law to tabulate: normal, exponential, cauchy, t:<nu>[:<sigma>]");
    table->add_option("--out,-o", tf.out, "write the table here instead of stdout");

    SimulateFlags sf;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
    simulate->add_option("--config", sf.config, "JSON simulation spec");
    simulate->add_option("--seed", sf.seed, "random seed (default 42)");
    simulate->add_option("--dataset-out,-d", sf.dataset_out, "write the dataset to this file");
    simulate->add_option("--format", sf.format, "dataset file format: csv or json")->check(CLI::IsMember({"csv", "json"}));
    simulate->add_option("--out,-o", sf.out, "write the summary here instead of stdout");

    GenesisFlags gf;
    auto* genesis = app.add_subcommand("genesis", "effective Student-t nu of the unfound-error model");
    genesis->add_option("--config", gf.config, "JSON model spec");
    genesis->add_option("--n-m", gf.n_m, "number of consistency measurements (default 3)");
    genesis->add_option("--alpha", gf.alpha, "prior exponent (default 1)");
    genesis->add_option("--chi2-max", gf.chi2_max, "detection threshold (default n_m - 1)");
    genesis->add_option("--sigma-floor", gf.sigma_floor, "reported uncertainty, lower integration bound (default 1)");
    genesis->add_option("--out,-o", gf.out, "write the result here instead of stdout");

    CommonFlags df;
    std::size_t target_pairs = 200000;
    auto* deconv = app.add_subcommand("deconvolve", "estimate the individual-measurement error law");
    add_input(deconv, df, true);
    add_analysis(deconv, df);
    deconv->add_option("--target-pairs", target_pairs, "simulated pairs per grid point (default 200000)");
    deconv->add_option("--out,-o", df.out, "write the result here instead of stdout");

    CommonFlags vf;
    auto* validate_cmd = app.add_subcommand("validate", "check a dataset and list problems");
    add_input(validate_cmd, vf, true);
    validate_cmd->add_option("--out,-o", vf.out, "write the report here instead of stdout");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(af, out);
        if (table->parsed()) return cmd_table(tf, dists, out);
        if (simulate->parsed()) return cmd_simulate(sf, out);
        if (genesis->parsed()) return cmd_genesis(gf, out);
        if (deconv->parsed()) return cmd_deconvolve(df, target_pairs, out);
        if (validate_cmd->parsed()) return cmd_validate(vf, out);
    } catch (const ValidationError& e) {
        err << "concord: validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const FitError& e) {
        err << "concord: fit error: " << e.what() << "\n";
        return kExitFit;
    } catch (const std::exception& e) {
        err << "concord: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}

} // namespace concord
