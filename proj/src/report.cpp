#include "concord/report.hpp"

#include "concord/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace concord {

std::vector<double> default_thresholds() {
    return {1.0, 2.0, 3.0, 5.0, 10.0};
}

std::vector<DistSpec> reference_distributions() {
    return {DistSpec::normal(), DistSpec::student_t(10.0), DistSpec::exponential(), DistSpec::student_t(2.0),
            DistSpec::cauchy()};
}

namespace {

std::string format_number(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_number(std::string_view text, std::string_view what) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw ConfigError("bad number '" + std::string(text) + "' in " + std::string(what));
    }
    return v;
}

} // namespace

std::string distribution_label(const DistSpec& dist) {
    std::string label;
    switch (dist.kind) {
    case DistKind::normal:
        label = "normal";
        break;
    case DistKind::cauchy:
        label = "cauchy";
        break;
    case DistKind::exponential:
        label = "exponential";
        break;
    case DistKind::student_t:
        label = "t:" + format_number(dist.nu);
        break;
    }
    if (dist.sigma != 1.0) label += ":" + format_number(dist.sigma);
    return label;
}

DistSpec parse_distribution(std::string_view text) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto colon = text.find(':', start);
        parts.push_back(text.substr(start, colon == std::string_view::npos ? colon : colon - start));
        if (colon == std::string_view::npos) break;
        start = colon + 1;
    }
    const std::string kind(parts[0]);
    DistSpec d;
    std::size_t next = 1;
    if (kind == "t" || kind == "student_t") {
        if (parts.size() < 2) throw ConfigError("distribution '" + std::string(text) + "' needs t:<nu>");
        d = DistSpec::student_t(parse_number(parts[1], "distribution"));
        next = 2;
    } else if (kind == "normal" || kind == "cauchy" || kind == "exponential") {
        d.kind = dist_kind_from_string(kind);
    } else {
        throw ConfigError("unknown distribution '" + std::string(text) + "'");
    }
    if (parts.size() > next + 1) throw ConfigError("too many fields in distribution '" + std::string(text) + "'");
    if (parts.size() == next + 1) d.sigma = parse_number(parts[next], "distribution");
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return d;
}

SurvivalRow theoretical_row(const DistSpec& dist, std::span<const double> thresholds) {
    SurvivalRow row;
    row.label = distribution_label(dist);
    for (double z : thresholds) row.probability.push_back(survival(dist, z));
    row.z95 = inverse_survival(dist, 0.05);
    row.p_normal_z95 = survival(DistSpec::normal(), row.z95);
    return row;
}

SurvivalRow observed_row(std::string label, const SurvivalTable& table) {
    return {std::move(label), table.probability, table.z95, survival(DistSpec::normal(), table.z95)};
}

Json survival_table_json(std::span<const double> thresholds, std::span<const SurvivalRow> rows) {
    Json out;
    out["statistic"] = "probability of a normalized difference larger than z";
    out["thresholds"] = std::vector<double>(thresholds.begin(), thresholds.end());
    Json list = Json::array();
    for (const auto& r : rows) {
        Json j;
        j["label"] = r.label;
        j["p"] = r.probability;
        j["z95"] = r.z95;
        j["p_normal_z95"] = r.p_normal_z95;
        list.push_back(std::move(j));
    }
    out["rows"] = std::move(list);
    return out;
}

// ---------------------------------------------------------------------------
// Pieces
// ---------------------------------------------------------------------------

namespace {

Json number_or_null(double v) {
    return std::isfinite(v) ? Json(v) : Json(nullptr);
}

template <class T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

} // namespace

Json to_json(const ZHistogram& h, Weighting weighting) {
    Json j;
    j["units"] = "probability per unit z";
    j["weighting"] = to_string(weighting);
    j["edges"] = h.edges;
    j["density"] = h.density;
    j["uncertainty"] = h.uncertainty;
    j["entries"] = h.total_pairs;
    j["total_weight"] = h.total_weight;
    j["overflow_probability"] = h.overflow_probability();
    return j;
}

Json to_json(const TFitResult& fit) {
    Json j;
    j["nu"] = fit.nu;
    j["u_nu"] = number_or_null(fit.u_nu);
    j["sigma"] = fit.sigma;
    j["u_sigma"] = number_or_null(fit.u_sigma);
    j["chi2"] = fit.chi2;
    j["chi2_per_dof"] = fit.chi2_per_dof;
    j["bins_used"] = fit.n_bins_used;
    j["bins_excluded"] = fit.n_bins_excluded;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    j["gaussian_compatible"] = fit.gaussian_compatible;
    j["gradient_norm"] = fit.gradient_norm;
    return j;
}

Json to_json(const BootstrapResult& b) {
    Json j;
    j["replicas"] = b.n_replicas;
    j["resampled_unit"] = "quantity";
    if (b.param_spread) {
        j["param_spread"] = {{"nu", b.param_spread->nu}, {"sigma", b.param_spread->sigma},
                             {"fits", b.param_spread->fits}};
    } else {
        j["param_spread"] = nullptr;
    }
    return j;
}

Json to_json(const DistributionFit& d, Weighting weighting, std::string_view statistic) {
    Json j;
    j["statistic"] = statistic;
    j["histogram"] = to_json(d.histogram, weighting);
    j["bootstrap"] = to_json(d.bootstrap);
    j["fit"] = to_json(d.fit);
    const SurvivalRow row = observed_row("observed", d.survival);
    j["survival"] = survival_table_json(d.survival.thresholds, std::span(&row, 1));
    return j;
}

Json to_json(const ValidationReport& report) {
    Json j;
    std::size_t errors = 0;
    for (const auto& i : report.issues) errors += i.severity == Severity::error;
    j["ok"] = !report.has_errors();
    j["errors"] = errors;
    j["warnings"] = report.issues.size() - errors;
    Json quantities = Json::array();
    for (const auto& q : report.quantities) {
        quantities.push_back({{"id", q.id}, {"measurements", q.measurements}, {"below_threshold", q.below_threshold}});
    }
    j["quantities"] = std::move(quantities);
    Json issues = Json::array();
    for (const auto& i : report.issues) {
        Json ji;
        ji["severity"] = i.severity == Severity::error ? "error" : "warning";
        ji["kind"] = i.kind;
        ji["quantity"] = i.quantity_id;
        ji["measurement"] = optional_json(i.measurement_index);
        ji["message"] = i.message;
        issues.push_back(std::move(ji));
    }
    j["issues"] = std::move(issues);
    return j;
}

Json to_json(const GapTrend& trend) {
    Json j;
    j["units"] = "years";
    j["gap_edges"] = trend.gap_edges;
    Json med = Json::array();
    for (const auto& m : trend.median) med.push_back(optional_json(m));
    j["median_z"] = std::move(med);
    j["pairs"] = trend.pair_counts;
    j["skipped_undated"] = trend.skipped_pairs;
    j["out_of_range"] = trend.out_of_range;
    return j;
}

Json to_json(const ImprovementTrend& trend) {
    Json j;
    j["units"] = "years";
    j["gap_edges"] = trend.gap_edges;
    Json med = Json::array();
    for (const auto& m : trend.median_ratio) med.push_back(optional_json(m));
    j["median_newer_over_older"] = std::move(med);
    j["pairs"] = trend.pair_counts;
    j["skipped_undated"] = trend.skipped_pairs;
    j["median_best_over_new"] = optional_json(trend.median_best_over_new);
    j["best_over_new_samples"] = trend.best_over_new_samples;
    j["halving_time_years"] = optional_json(trend.halving_time_years);
    return j;
}

Json to_json(const RelativeUncertaintyDistribution& dist) {
    Json j;
    j["units"] = "log10(u/|x|)";
    j["edges"] = dist.log10_edges;
    j["counts"] = dist.counts;
    j["underflow"] = dist.underflow;
    j["overflow"] = dist.overflow;
    j["included"] = dist.included;
    j["excluded_zero_value"] = dist.excluded_zero_value;
    return j;
}

Json to_json(const DeconvolveResult& r) {
    Json j;
    j["nu_x"] = r.nu_x;
    j["sigma_x"] = r.sigma_x;
    j["chi2"] = r.chi2;
    j["grid_nu"] = r.grid_nu;
    j["grid_sigma"] = r.grid_sigma;
    j["grid_chi2"] = r.grid_chi2;
    j["on_boundary"] = r.on_boundary;
    j["bins_used"] = r.bins_used;
    j["simulated_pairs"] = r.simulated_pairs;
    return j;
}

Json to_json(const GenesisFit& g, const GenesisSpec& spec) {
    Json j;
    j["config"] = to_json(spec);
    j["effective_nu"] = g.effective_nu;
    j["sigma"] = g.sigma;
    j["asymptotic_nu"] = g.asymptotic_nu;
    j["rms_log_residual"] = g.rms_log_residual;
    j["fit_grid"] = {{"z_min", 0.0}, {"z_max", 20.0}, {"step", 0.1}};
    j["converged"] = g.fit.converged;
    return j;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

// Checked accessors: every failure names the dotted key path.
class Reader {
public:
    Reader(const Json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError("config" + where() + " must be a JSON object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        const std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : obj_.items()) {
            if (!ok.count(k)) throw ConfigError("unknown config key '" + path(k) + "'");
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }
    const Json& at(const std::string& key) const { return obj_.at(key); }
    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

    double number(const std::string& key) const {
        const auto& v = obj_.at(key);
        if (!v.is_number()) throw ConfigError("config key '" + path(key) + "' must be a number");
        return v.get<double>();
    }

    std::uint64_t count(const std::string& key) const {
        const auto& v = obj_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) {
            throw ConfigError("config key '" + path(key) + "' must be a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    bool flag(const std::string& key) const {
        const auto& v = obj_.at(key);
        if (!v.is_boolean()) throw ConfigError("config key '" + path(key) + "' must be true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key) const {
        const auto& v = obj_.at(key);
        if (!v.is_string()) throw ConfigError("config key '" + path(key) + "' must be a string");
        return v.get<std::string>();
    }

    template <class F>
    auto with_key(const std::string& key, F&& f) const {
        try {
            return f();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("config key '" + path(key) + "': " + e.what());
        }
    }

private:
    std::string where() const { return prefix_.empty() ? "" : " key '" + prefix_ + "'"; }

    const Json& obj_;
    std::string prefix_;
};

} // namespace

AnalysisConfig AnalysisSettings::resolve() const {
    AnalysisConfig c;
    c.edges = parse_bin_spec(bins);
    c.pairs.weighting = weighting;
    c.pairs.mode = mode == CombineKind::covariance ? CombineMode::with_covariance(covariance)
                                                   : CombineMode{mode, 0.0};
    c.pairs.exclude_shared_source = exclude_shared_source;
    if (replicas < 2) throw ConfigError("replicas must be at least 2");
    c.replicas = replicas;
    c.seed = seed;
    c.h_scores = h_scores;
    c.refit_replicas = refit_replicas;
    c.thresholds = default_thresholds();
    return c;
}

Json to_json(const AnalysisSettings& s) {
    Json j;
    j["bins"] = s.bins;
    j["weighting"] = to_string(s.weighting);
    j["mode"] = to_string(s.mode);
    j["cov"] = s.covariance;
    j["replicas"] = s.replicas;
    j["seed"] = s.seed.value;
    j["exclude-shared-source"] = s.exclude_shared_source;
    j["h-scores"] = s.h_scores;
    j["refit"] = s.refit_replicas;
    return j;
}

void apply_config(AnalysisSettings& s, const Json& config) {
    const Reader r(config, "");
    r.allow({"bins", "weighting", "mode", "cov", "replicas", "seed", "exclude-shared-source", "h-scores", "refit"});
    if (r.has("bins")) {
        if (r.at("bins").is_array()) {
            std::string spec;
            for (const auto& e : r.at("bins")) {
                if (!e.is_number()) throw ConfigError("config key 'bins' must hold numbers");
                if (!spec.empty()) spec += ",";
                spec += format_number(e.get<double>());
            }
            s.bins = spec;
        } else {
            s.bins = r.text("bins");
        }
        r.with_key("bins", [&] { return parse_bin_spec(s.bins); });
    }
    if (r.has("weighting")) s.weighting = r.with_key("weighting", [&] { return weighting_from_string(r.text("weighting")); });
    if (r.has("mode")) s.mode = r.with_key("mode", [&] { return combine_kind_from_string(r.text("mode")); });
    if (r.has("cov")) {
        s.covariance = r.number("cov");
        s.mode = CombineKind::covariance;
    }
    if (r.has("replicas")) s.replicas = r.count("replicas");
    if (r.has("seed")) s.seed = {r.count("seed")};
    if (r.has("exclude-shared-source")) s.exclude_shared_source = r.flag("exclude-shared-source");
    if (r.has("h-scores")) s.h_scores = r.flag("h-scores");
    if (r.has("refit")) s.refit_replicas = r.flag("refit");
}

Json to_json(const SimSpec& spec) {
    Json j;
    j["n_quantities"] = spec.n_quantities;
    j["measurements_per_quantity"] = {{"min", spec.measurements_per_quantity.min},
                                      {"max", spec.measurements_per_quantity.max}};
    Json law;
    law["kind"] = to_string(spec.error_law.kind);
    if (spec.error_law.kind == DistKind::student_t) law["nu"] = spec.error_law.nu;
    law["sigma"] = spec.error_law.sigma;
    j["error_law"] = std::move(law);
    j["reported_u"] = {{"min", spec.reported_u.min}, {"max", spec.reported_u.max},
                       {"relative", spec.reported_u.relative}};
    j["true_value"] = {{"lo", spec.true_value.lo}, {"hi", spec.true_value.hi}};
    if (spec.bounds) {
        j["bounds"] = {{"lower", optional_json(spec.bounds->lower)}, {"upper", optional_json(spec.bounds->upper)}};
    } else {
        j["bounds"] = nullptr;
    }
    if (spec.date_range) {
        j["date_range"] = {{"first", spec.date_range->first.iso()}, {"last", spec.date_range->last.iso()}};
    } else {
        j["date_range"] = nullptr;
    }
    j["seed"] = spec.seed.value;
    return j;
}

SimSpec sim_spec_from_json(const Json& config) {
    const Reader r(config, "");
    r.allow({"n_quantities", "measurements_per_quantity", "error_law", "reported_u", "true_value", "bounds",
             "date_range", "seed"});
    SimSpec s;
    if (r.has("n_quantities")) s.n_quantities = r.count("n_quantities");
    if (r.has("measurements_per_quantity")) {
        const auto& v = r.at("measurements_per_quantity");
        if (v.is_number_integer()) {
            s.measurements_per_quantity.min = s.measurements_per_quantity.max = r.count("measurements_per_quantity");
        } else {
            const Reader m(v, "measurements_per_quantity");
            m.allow({"min", "max"});
            if (m.has("min")) s.measurements_per_quantity.min = m.count("min");
            s.measurements_per_quantity.max = m.has("max") ? m.count("max") : s.measurements_per_quantity.min;
        }
    }
    if (r.has("error_law")) {
        const Reader e(r.at("error_law"), "error_law");
        e.allow({"kind", "nu", "sigma"});
        if (e.has("kind")) {
            s.error_law.kind = e.with_key("kind", [&] { return dist_kind_from_string(e.text("kind")); });
        }
        if (e.has("nu")) s.error_law.nu = e.number("nu");
        if (e.has("sigma")) s.error_law.sigma = e.number("sigma");
        e.with_key("kind", [&] {
            s.error_law.validate();
            return 0;
        });
    }
    if (r.has("reported_u")) {
        const Reader u(r.at("reported_u"), "reported_u");
        u.allow({"min", "max", "relative"});
        if (u.has("min")) s.reported_u.min = u.number("min");
        s.reported_u.max = u.has("max") ? u.number("max") : s.reported_u.min;
        if (u.has("relative")) s.reported_u.relative = u.flag("relative");
    }
    if (r.has("true_value")) {
        const Reader t(r.at("true_value"), "true_value");
        t.allow({"lo", "hi"});
        if (t.has("lo")) s.true_value.lo = t.number("lo");
        s.true_value.hi = t.has("hi") ? t.number("hi") : s.true_value.lo;
    }
    if (r.has("bounds")) {
        const Reader b(r.at("bounds"), "bounds");
        b.allow({"lower", "upper"});
        SimBounds sb;
        if (b.has("lower")) sb.lower = b.number("lower");
        if (b.has("upper")) sb.upper = b.number("upper");
        s.bounds = sb;
    }
    if (r.has("date_range")) {
        const Reader d(r.at("date_range"), "date_range");
        d.allow({"first", "last"});
        DateRange dr;
        for (const char* key : {"first", "last"}) {
            if (!d.has(key)) continue;
            const auto parsed = Date::parse(d.text(key));
            if (!parsed) throw ConfigError("config key '" + d.path(key) + "' must be a YYYY-MM-DD date");
            (std::string_view(key) == "first" ? dr.first : dr.last) = *parsed;
        }
        s.date_range = dr;
    }
    if (r.has("seed")) s.seed = {r.count("seed")};
    return s;
}

Json to_json(const GenesisSpec& spec) {
    Json j;
    j["n_m"] = spec.n_m;
    j["alpha"] = spec.alpha;
    j["chi2_max"] = spec.threshold();
    j["sigma_floor"] = spec.sigma_floor;
    return j;
}

GenesisSpec genesis_spec_from_json(const Json& config) {
    const Reader r(config, "");
    r.allow({"n_m", "alpha", "chi2_max", "sigma_floor"});
    GenesisSpec g;
    if (r.has("n_m")) g.n_m = r.count("n_m");
    if (r.has("alpha")) g.alpha = r.number("alpha");
    if (r.has("chi2_max")) g.chi2_max = r.number("chi2_max");
    if (r.has("sigma_floor")) g.sigma_floor = r.number("sigma_floor");
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return g;
}

Json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return Json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Whole analysis
// ---------------------------------------------------------------------------

AnalysisOutcome run_analysis(const Dataset& d, const AnalysisSettings& settings) {
    const AnalysisConfig config = settings.resolve();
    AnalysisOutcome out;
    Json& j = out.report;
    j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    j["seed"] = settings.seed.value;
    j["config"] = to_json(settings);

    const auto validation = validate(d);
    std::size_t pair_count = 0;
    for (const auto& q : d.quantities) {
        const std::size_t n = q.measurements.size();
        if (n >= 2) pair_count += n * (n - 1) / 2;
    }
    j["dataset"] = {{"name", d.name},
                    {"quantities", d.quantities.size()},
                    {"measurements", d.measurement_count()},
                    {"pairs", pair_count}};
    j["validation"] = to_json(validation);
    if (validation.has_errors()) {
        out.exit_code = kExitValidation;
        return out;
    }

    const auto groups = pair_groups(d, config.pairs);
    std::size_t kept = 0;
    for (const auto& g : groups) kept += g.size();
    j["dataset"]["pairs_used"] = kept;

    bool converged = true;
    auto analyze = [&](const SampleGroups& g, const AnalysisConfig& c, std::string_view stat) -> Json {
        try {
            const auto fit = analyze_groups(g, c);
            converged = converged && fit.fit.converged;
            return to_json(fit, c.pairs.weighting, stat);
        } catch (const FitError& e) {
            converged = false;
            return {{"statistic", stat}, {"error", e.what()}};
        }
    };
    j["z"] = analyze(groups, config, "z");
    if (config.h_scores) {
        AnalysisConfig hc = config;
        hc.seed = derive_seed(config.seed, 0x68);
        j["h"] = analyze(h_groups(d), hc, "h");
    }

    Json trends;
    trends["relative_uncertainty"] = to_json(relative_uncertainty_distribution(d));
    trends["median_z_vs_gap"] = to_json(median_z_vs_gap(d, {}, config.pairs));
    trends["uncertainty_improvement"] = to_json(uncertainty_improvement(d, {}, config.pairs));
    j["trends"] = std::move(trends);

    out.exit_code = converged ? kExitOk : kExitFit;
    return out;
}

} // namespace concord
