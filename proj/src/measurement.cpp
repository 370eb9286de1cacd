#include "concord/measurement.hpp"

#include "concord/error.hpp"
#include "concord/statfun.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace concord {

namespace {

using json = nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Splits one CSV record. Fields may be double-quoted, with "" standing for a
// literal quote; unquoted fields are trimmed.
std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (true) {
        std::string field;
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i < line.size() && line[i] == '"') {
            ++i;
            while (true) {
                if (i >= line.size()) throw std::invalid_argument("unterminated quoted field");
                if (line[i] == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        field += '"';
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                field += line[i++];
            }
            while (i < line.size() && line[i] != sep) {
                if (line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
                    throw std::invalid_argument("unexpected text after a quoted field");
                }
                ++i;
            }
        } else {
            const auto pos = line.find(sep, i);
            const auto stop = pos == std::string_view::npos ? line.size() : pos;
            field = std::string(trim(line.substr(i, stop - i)));
            i = stop;
        }
        out.push_back(std::move(field));
        if (i >= line.size()) break;
        ++i; // separator
    }
    return out;
}

std::string quote_csv(const std::string& field) {
    const bool plain = field.find_first_of(",\"#\r\n") == std::string::npos &&
                       (field.empty() || (field.front() != ' ' && field.back() != ' ' &&
                                          field.front() != '\t' && field.back() != '\t'));
    if (plain) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::optional<double> parse_number(std::string_view field) {
    if (field.empty()) return std::nullopt;
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
        throw std::invalid_argument("not a finite decimal number: '" + std::string(field) + "'");
    }
    return v;
}

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void check_uncertainties(const Measurement& m, const std::string& quantity, std::size_t row) {
    auto where = [&] {
        return "quantity '" + quantity + "', row " + std::to_string(row);
    };
    if (m.u_plus < 0.0 || m.u_minus < 0.0) {
        throw ValidationError(where() + ": negative uncertainty");
    }
    if (m.u_plus == 0.0 && m.u_minus == 0.0) {
        throw ValidationError(where() + ": non-positive uncertainty (both sides are zero)");
    }
}

void merge_bound(std::optional<double>& slot, std::optional<double> value, const char* name,
                 const std::string& quantity, std::size_t line) {
    if (!value) return;
    if (slot && *slot != *value) {
        throw ParseError(line, std::string("conflicting ") + name + " for quantity '" + quantity + "'");
    }
    slot = value;
}

const std::vector<std::string> kCsvColumns{"quantity_id", "value", "u_plus", "u_minus", "date", "source_id"};

Dataset parse_csv(std::string_view text, std::string name) {
    Dataset dataset{std::move(name), {}};
    std::map<std::string, std::size_t, std::less<>> index;
    bool have_header = false;
    bool with_bounds = false;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view raw = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') {
            if (end == text.size()) break;
            continue;
        }
        std::vector<std::string> fields;
        try {
            fields = split(line, ',');
        } catch (const std::invalid_argument& e) {
            throw ParseError(line_no, e.what());
        }
        if (!have_header) {
            const bool base_ok = fields.size() >= kCsvColumns.size() &&
                                 std::equal(kCsvColumns.begin(), kCsvColumns.end(), fields.begin());
            const bool bounds_ok = fields.size() == kCsvColumns.size() ||
                                   (fields.size() == kCsvColumns.size() + 2 &&
                                    fields[6] == "lower_bound" && fields[7] == "upper_bound");
            if (!base_ok || !bounds_ok) {
                throw ParseError(line_no, "expected header 'quantity_id,value,u_plus,u_minus,date,"
                                          "source_id[,lower_bound,upper_bound]'");
            }
            with_bounds = fields.size() == kCsvColumns.size() + 2;
            have_header = true;
            if (end == text.size()) break;
            continue;
        }
        const std::size_t expected = with_bounds ? 8 : 6;
        if (fields.size() != expected && !(with_bounds && fields.size() == 6)) {
            throw ParseError(line_no, "expected " + std::to_string(expected) + " fields, found " +
                                          std::to_string(fields.size()));
        }
        const std::string id(fields[0]);
        if (id.empty()) {
            throw ParseError(line_no, "empty quantity_id");
        }
        Measurement m;
        std::optional<double> lower;
        std::optional<double> upper;
        try {
            const auto value = parse_number(fields[1]);
            const auto up = parse_number(fields[2]);
            if (!value) throw std::invalid_argument("missing value");
            if (!up) throw std::invalid_argument("missing u_plus");
            m.value = *value;
            m.u_plus = *up;
            m.u_minus = parse_number(fields[3]).value_or(*up);
            if (fields.size() == 8) {
                lower = parse_number(fields[6]);
                upper = parse_number(fields[7]);
            }
        } catch (const std::invalid_argument& e) {
            throw ParseError(line_no, e.what());
        }
        if (!fields[4].empty()) {
            m.date = Date::parse(fields[4]);
            if (!m.date) {
                throw ParseError(line_no, "date must be YYYY-MM-DD, got '" + std::string(fields[4]) + "'");
            }
        }
        if (!fields[5].empty()) {
            m.source_id = std::string(fields[5]);
        }
        check_uncertainties(m, id, line_no);

        auto it = index.find(id);
        if (it == index.end()) {
            it = index.emplace(id, dataset.quantities.size()).first;
            dataset.quantities.push_back(Quantity{id, {}, {}, {}});
        }
        Quantity& q = dataset.quantities[it->second];
        merge_bound(q.lower_bound, lower, "lower_bound", id, line_no);
        merge_bound(q.upper_bound, upper, "upper_bound", id, line_no);
        q.measurements.push_back(std::move(m));
        if (end == text.size()) break;
    }
    if (!have_header) {
        throw ParseError(0, "missing CSV header");
    }
    return dataset;
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

std::optional<double> json_number(const json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) {
        throw ParseError(0, where + ": '" + key + "' must be a number");
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
        throw ParseError(0, where + ": '" + key + "' must be finite");
    }
    return v;
}

std::optional<std::string> json_string(const json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) {
        throw ParseError(0, where + ": '" + key + "' must be a string");
    }
    return it->get<std::string>();
}

Dataset parse_json(std::string_view text, std::string name) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
    }
    if (!doc.is_object()) {
        throw ParseError(1, "top-level JSON value must be an object");
    }
    Dataset dataset;
    dataset.name = json_string(doc, "name", "dataset").value_or(std::move(name));
    const auto qs = doc.find("quantities");
    if (qs == doc.end() || !qs->is_array()) {
        throw ParseError(0, "dataset: 'quantities' must be an array");
    }
    std::size_t qi = 0;
    for (const auto& jq : *qs) {
        const std::string where = "quantities[" + std::to_string(qi) + "]";
        if (!jq.is_object()) throw ParseError(0, where + " must be an object");
        Quantity q;
        const auto id = json_string(jq, "id", where);
        if (!id || id->empty()) throw ParseError(0, where + ": missing 'id'");
        q.id = *id;
        q.lower_bound = json_number(jq, "lower_bound", where);
        q.upper_bound = json_number(jq, "upper_bound", where);
        const auto ms = jq.find("measurements");
        if (ms == jq.end() || !ms->is_array()) {
            throw ParseError(0, where + ": 'measurements' must be an array");
        }
        std::size_t mi = 0;
        for (const auto& jm : *ms) {
            const std::string mwhere = where + ".measurements[" + std::to_string(mi) + "]";
            if (!jm.is_object()) throw ParseError(0, mwhere + " must be an object");
            Measurement m;
            const auto value = json_number(jm, "value", mwhere);
            const auto up = json_number(jm, "u_plus", mwhere);
            if (!value) throw ParseError(0, mwhere + ": missing 'value'");
            if (!up) throw ParseError(0, mwhere + ": missing 'u_plus'");
            m.value = *value;
            m.u_plus = *up;
            m.u_minus = json_number(jm, "u_minus", mwhere).value_or(*up);
            if (const auto d = json_string(jm, "date", mwhere); d && !d->empty()) {
                m.date = Date::parse(*d);
                if (!m.date) throw ParseError(0, mwhere + ": date must be YYYY-MM-DD");
            }
            m.source_id = json_string(jm, "source_id", mwhere);
            check_uncertainties(m, q.id, mi + 1);
            q.measurements.push_back(std::move(m));
            ++mi;
        }
        dataset.quantities.push_back(std::move(q));
        ++qi;
    }
    return dataset;
}

std::string serialize_csv(const Dataset& dataset) {
    const bool with_bounds = std::any_of(dataset.quantities.begin(), dataset.quantities.end(),
                                         [](const Quantity& q) { return q.lower_bound || q.upper_bound; });
    std::string out = "quantity_id,value,u_plus,u_minus,date,source_id";
    if (with_bounds) out += ",lower_bound,upper_bound";
    out += '\n';
    for (const auto& q : dataset.quantities) {
        for (const auto& m : q.measurements) {
            out += quote_csv(q.id);
            out += ',' + format_number(m.value);
            out += ',' + format_number(m.u_plus);
            out += ',' + format_number(m.u_minus);
            out += ',' + (m.date ? m.date->iso() : std::string());
            out += ',' + quote_csv(m.source_id.value_or(""));
            if (with_bounds) {
                out += ',' + (q.lower_bound ? format_number(*q.lower_bound) : std::string());
                out += ',' + (q.upper_bound ? format_number(*q.upper_bound) : std::string());
            }
            out += '\n';
        }
    }
    return out;
}

std::string serialize_json(const Dataset& dataset) {
    json doc;
    doc["name"] = dataset.name;
    json qs = json::array();
    for (const auto& q : dataset.quantities) {
        json jq;
        jq["id"] = q.id;
        if (q.lower_bound) jq["lower_bound"] = *q.lower_bound;
        if (q.upper_bound) jq["upper_bound"] = *q.upper_bound;
        json ms = json::array();
        for (const auto& m : q.measurements) {
            json jm;
            jm["value"] = m.value;
            jm["u_plus"] = m.u_plus;
            jm["u_minus"] = m.u_minus;
            if (m.date) jm["date"] = m.date->iso();
            if (m.source_id) jm["source_id"] = *m.source_id;
            ms.push_back(std::move(jm));
        }
        jq["measurements"] = std::move(ms);
        qs.push_back(std::move(jq));
    }
    doc["quantities"] = std::move(qs);
    return doc.dump(2) + "\n";
}

} // namespace

// ---------------------------------------------------------------------------
// Date
// ---------------------------------------------------------------------------

std::optional<Date> Date::parse(std::string_view text) {
    text = trim(text);
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t pos, std::size_t len, int& out) {
        const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        return ec == std::errc{} && ptr == text.data() + pos + len;
    };
    int y = 0;
    int m = 0;
    int d = 0;
    if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return std::nullopt;
    if (m < 1 || d < 1) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return Date{y, static_cast<unsigned>(m), static_cast<unsigned>(d)};
}

std::string Date::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
    return buf;
}

long Date::days() const {
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                          std::chrono::day{day}};
    return static_cast<long>(std::chrono::sys_days(ymd).time_since_epoch().count());
}

double years_between(const Date& a, const Date& b) {
    return std::abs(static_cast<double>(a.days() - b.days())) / 365.2425;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

std::size_t Dataset::measurement_count() const {
    std::size_t n = 0;
    for (const auto& q : quantities) n += q.measurements.size();
    return n;
}

const Quantity* Dataset::find(std::string_view id) const {
    for (const auto& q : quantities) {
        if (q.id == id) return &q;
    }
    return nullptr;
}

DataFormat data_format_from_string(std::string_view name) {
    if (name == "csv") return DataFormat::csv;
    if (name == "json") return DataFormat::json;
    throw ConfigError("unknown data format '" + std::string(name) + "' (expected csv or json)");
}

DataFormat data_format_from_path(std::string_view path) {
    std::string ext;
    if (const auto dot = path.rfind('.'); dot != std::string_view::npos) {
        for (char c : path.substr(dot + 1)) ext += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return ext == "json" ? DataFormat::json : DataFormat::csv;
}

Dataset parse_dataset(std::string_view text, DataFormat format, std::string name) {
    return format == DataFormat::csv ? parse_csv(text, std::move(name))
                                     : parse_json(text, std::move(name));
}

std::string serialize_dataset(const Dataset& dataset, DataFormat format) {
    return format == DataFormat::csv ? serialize_csv(dataset) : serialize_json(dataset);
}

Dataset load_dataset(const std::string& path, std::optional<DataFormat> format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string name = path;
    if (const auto slash = name.find_last_of('/'); slash != std::string::npos) name.erase(0, slash + 1);
    if (const auto dot = name.find_last_of('.'); dot != std::string::npos && dot > 0) name.erase(dot);
    return parse_dataset(buf.str(), format.value_or(data_format_from_path(path)), name);
}

void save_dataset(const Dataset& dataset, const std::string& path, std::optional<DataFormat> format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write '" + path + "'");
    }
    out << serialize_dataset(dataset, format.value_or(data_format_from_path(path)));
}

// ---------------------------------------------------------------------------
// Uncertainty normalization
// ---------------------------------------------------------------------------

Coverage coverage_from_string(std::string_view name) {
    if (name == "k1") return Coverage::k1;
    if (name == "k2") return Coverage::k2;
    if (name == "ci683") return Coverage::ci683;
    if (name == "ci95") return Coverage::ci95;
    throw std::invalid_argument("unknown coverage '" + std::string(name) + "'");
}

double coverage_divisor(Coverage coverage) {
    switch (coverage) {
    case Coverage::k1:
    case Coverage::ci683:
        return 1.0;
    case Coverage::k2:
    case Coverage::ci95:
        return 2.0;
    }
    return 1.0;
}

StandardUncertainty normalize_uncertainty(std::optional<double> half_width, Coverage coverage,
                                          std::span<const double> components) {
    if (!half_width && components.empty()) {
        throw std::invalid_argument("normalize_uncertainty: no interval width or components given");
    }
    double sum_sq = 0.0;
    auto add = [&](double w) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("normalize_uncertainty: widths must be finite and >= 0");
        }
        sum_sq += w * w;
    };
    if (half_width) add(*half_width);
    for (double c : components) add(c);
    const double u = std::sqrt(sum_sq) / coverage_divisor(coverage);
    return {u, u};
}

StandardUncertainty normalize_uncertainty(double plus_half_width, double minus_half_width,
                                          Coverage coverage) {
    const double plus = normalize_uncertainty(plus_half_width, coverage).u_plus;
    const double minus = normalize_uncertainty(minus_half_width, coverage).u_plus;
    return {plus, minus};
}

// ---------------------------------------------------------------------------
// Binomial rates
// ---------------------------------------------------------------------------

namespace {

// Root of the increasing function f on [0, 1] with f(root) == target.
template <typename F>
double bisect_unit(F f, double target) {
    double lo = 0.0;
    double hi = 1.0;
    for (int i = 0; i < 200 && hi - lo > 1e-16; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace

BinomialInterval binomial_interval(std::size_t k, std::size_t n, double confidence,
                                   BinomialMethod method) {
    if (n == 0) {
        throw std::invalid_argument("binomial_interval: group size n must be >= 1");
    }
    if (k > n) {
        throw std::invalid_argument("binomial_interval: k must not exceed n");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw std::invalid_argument("binomial_interval: confidence must lie in (0, 1)");
    }
    const double nn = static_cast<double>(n);
    const double kk = static_cast<double>(k);
    BinomialInterval out;
    if (method == BinomialMethod::wilson) {
        const double z = inverse_survival(DistSpec::normal(), 1.0 - confidence);
        const double p = kk / nn;
        const double z2n = z * z / nn;
        const double centre = (p + 0.5 * z2n) / (1.0 + z2n);
        const double half = z / (1.0 + z2n) * std::sqrt(p * (1.0 - p) / nn + 0.25 * z2n / nn);
        out.lower = k == 0 ? 0.0 : std::max(0.0, centre - half);
        out.upper = k == n ? 1.0 : std::min(1.0, centre + half);
    } else {
        const double alpha = 1.0 - confidence;
        // P(X >= k | p) = I_p(k, n - k + 1), increasing in p.
        out.lower = k == 0 ? 0.0
                           : bisect_unit([&](double p) { return beta_inc(kk, nn - kk + 1.0, p); },
                                         0.5 * alpha);
        out.upper = k == n ? 1.0
                           : bisect_unit([&](double p) { return beta_inc(kk + 1.0, nn - kk, p); },
                                         1.0 - 0.5 * alpha);
    }
    return out;
}

Measurement binomial_rate_difference(std::size_t k1, std::size_t n1, std::size_t k2,
                                     std::size_t n2, BinomialMethod method, double confidence) {
    const auto ci1 = binomial_interval(k1, n1, confidence, method);
    const auto ci2 = binomial_interval(k2, n2, confidence, method);
    const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
    Measurement m;
    m.value = p1 - p2;
    m.u_plus = std::hypot(ci1.upper - p1, p2 - ci2.lower);
    m.u_minus = std::hypot(p1 - ci1.lower, ci2.upper - p2);
    return m;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

bool ValidationReport::has_errors() const {
    return std::any_of(issues.begin(), issues.end(),
                       [](const ValidationIssue& i) { return i.severity == Severity::error; });
}

std::size_t ValidationReport::count(std::string_view kind) const {
    return static_cast<std::size_t>(std::count_if(
        issues.begin(), issues.end(), [&](const ValidationIssue& i) { return i.kind == kind; }));
}

ValidationReport validate(const Dataset& dataset) {
    ValidationReport report;
    std::map<std::string, std::size_t, std::less<>> seen_ids;
    auto issue = [&](Severity s, std::string kind, const std::string& qid,
                     std::optional<std::size_t> index, std::string message) {
        report.issues.push_back({s, std::move(kind), qid, index, std::move(message)});
    };

    for (const auto& q : dataset.quantities) {
        const std::size_t n = q.measurements.size();
        report.quantities.push_back({q.id, n, n < kInclusionThreshold});

        if (++seen_ids[q.id] == 2) {
            issue(Severity::error, "duplicate_quantity_id", q.id, {}, "quantity id appears more than once");
        }
        if (n < 2) {
            issue(Severity::error, "too_few_measurements", q.id, {},
                  "at least 2 measurements are needed for comparison, found " + std::to_string(n));
        } else if (n < kInclusionThreshold) {
            issue(Severity::warning, "below_inclusion_threshold", q.id, {},
                  std::to_string(n) + " measurements, below the inclusion threshold of " +
                      std::to_string(kInclusionThreshold));
        }
        if (q.lower_bound && q.upper_bound && *q.upper_bound < *q.lower_bound) {
            issue(Severity::error, "inverted_bounds", q.id, {}, "upper_bound is below lower_bound");
        }

        using Key = std::tuple<double, double, double, std::optional<Date>, std::optional<std::string>>;
        std::map<Key, std::size_t> rows;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& m = q.measurements[i];
            if (!std::isfinite(m.value) || !std::isfinite(m.u_plus) || !std::isfinite(m.u_minus)) {
                issue(Severity::error, "non_finite", q.id, i, "value or uncertainty is not finite");
                continue;
            }
            if (m.u_plus < 0.0 || m.u_minus < 0.0) {
                issue(Severity::error, "negative_uncertainty", q.id, i, "negative uncertainty");
            } else if (m.u_plus == 0.0 && m.u_minus == 0.0) {
                issue(Severity::error, "zero_uncertainty", q.id, i, "both uncertainties are zero");
            }
            if ((q.lower_bound && m.value < *q.lower_bound) || (q.upper_bound && m.value > *q.upper_bound)) {
                issue(Severity::error, "bound_violation", q.id, i, "value lies outside the quantity bounds");
            }
            const Key key{m.value, m.u_plus, m.u_minus, m.date, m.source_id};
            if (const auto [it, inserted] = rows.emplace(key, i); !inserted) {
                issue(Severity::warning, "suspected_duplicate", q.id, i,
                      "identical to measurement " + std::to_string(it->second) +
                          "; probably not independent");
            }
        }
    }
    return report;
}

} // namespace concord
