#pragma once

// JSON and CSV serialization. Every output file carries a metadata record
// with the parameters, seed, library version and RNG identity: a top-level
// "meta" object in JSON, a leading "# {json}" comment line in CSV.

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "urq/asymptotics.hpp"
#include "urq/core.hpp"
#include "urq/harmonic_twist.hpp"
#include "urq/kernels.hpp"
#include "urq/qbd.hpp"
#include "urq/rng.hpp"
#include "urq/simulate.hpp"
#include "urq/spectral.hpp"

namespace urq {

inline constexpr std::string_view kVersion = "1.0.0";

using Json = nlohmann::json;

/// %.17g: enough digits to round-trip any double.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

inline Json to_json(const ModelParams& p, Model model) {
    return Json{{"lambda", p.lambda}, {"mu", p.mu},  {"alpha", p.alpha},
                {"beta", p.beta},     {"p", p.p},    {"C", p.C},
                {"model", std::string(to_string(model))}};
}

struct ParsedParams {
    ModelParams params;
    Model model = Model::Model1;
};

/// Reads the flat parameter object; "p" defaults to 1, "model" to model1 and
/// "C" to the default uniformization. The result is validated.
inline ParsedParams params_from_json(const Json& j) {
    if (!j.is_object()) throw InvalidParameter("parameter file must hold a JSON object");
    const auto number = [&](const char* key) -> double {
        if (!j.contains(key)) throw InvalidParameter(std::string("missing parameter '") + key + "'");
        if (!j.at(key).is_number()) throw InvalidParameter(std::string("parameter '") + key + "' must be a number");
        return j.at(key).get<double>();
    };
    ParsedParams out;
    if (j.contains("model")) {
        if (!j.at("model").is_string()) throw InvalidParameter("parameter 'model' must be a string");
        out.model = parse_model(j.at("model").get<std::string>());
    }
    auto& p = out.params;
    p.lambda = number("lambda");
    p.mu = number("mu");
    p.alpha = number("alpha");
    p.beta = number("beta");
    p.p = j.contains("p") ? number("p") : 1.0;
    p.C = j.contains("C") ? number("C") : default_uniformization(p.lambda, p.mu, p.alpha, p.beta, out.model);
    validate(p, out.model);
    return out;
}

inline ParsedParams read_params_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParameter("cannot open parameter file " + path);
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw InvalidParameter("parameter file " + path + " is not valid JSON: " + e.what());
    }
    return params_from_json(j);
}

// ---------------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------------

struct Meta {
    std::string command;
    ModelParams params;
    Model model = Model::Model1;
    std::optional<std::uint64_t> seed;
    Json extra = Json::object();
};

inline Json to_json(const Meta& m) {
    Json j{{"version", std::string(kVersion)},
           {"command", m.command},
           {"params", to_json(m.params, m.model)},
           {"rng", std::string(kRngIdentity)},
           {"seed", m.seed ? Json(*m.seed) : Json(nullptr)}};
    for (auto it = m.extra.begin(); it != m.extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

inline void write_csv_meta(std::ostream& out, const Meta& m) { out << "# " << to_json(m).dump() << '\n'; }

// ---------------------------------------------------------------------------
// Domain objects
// ---------------------------------------------------------------------------

inline Json state_json(const State& s) {
    if (s.model == Model::Model1) return Json::array({s.x, std::string(to_string(s.status))});
    return Json::array({s.x, s.y, std::string(to_string(s.status))});
}

inline Json to_json(const TransitionRow& row) {
    Json to = Json::array();
    for (const auto& t : row) to.push_back(Json::array({state_json(t.to), t.prob}));
    return Json{{"from", state_json(row.origin())}, {"to", to}};
}

inline Json to_json(const SpectralSolution& s) {
    return Json{{"p", s.p},
                {"s_p", s.s_p},
                {"t1", s.t1},
                {"t2", s.t2},
                {"gamma_p", s.gamma_p},
                {"gamma_secondary", s.gamma_secondary},
                {"g_constant", s.g_constant ? Json(*s.g_constant) : Json(nullptr)},
                {"t2_valid", s.t2_valid}};
}

inline Json to_json(const StabilityVerdict& v) {
    return Json{{"stable", v.stable}, {"effective_rate", v.effective_rate}, {"if_and_only_if", v.if_and_only_if}};
}

inline Json to_json(const TwistSummary& t) {
    Json j{{"model", std::string(to_string(t.model))},
           {"harmonic", {{"base", t.harmonic.base}, {"up_weight", t.harmonic.up_weight},
                         {"down_weight", t.harmonic.down_weight}}},
           {"drift", {{"closed_form", t.drift.closed_form}, {"phi_weighted", t.drift.phi_weighted},
                      {"per_time", t.drift.per_time()}}}};
    if (t.rates)
        j["rates"] = {{"lambda_t", t.rates->lambda_t}, {"mu_t", t.rates->mu_t}, {"alpha_t", t.rates->alpha_t},
                      {"beta_t", t.rates->beta_t}, {"B", t.rates->B}};
    Json phi{{"up", t.phi.up}, {"down", t.phi.down}};
    if (t.phi.product)
        phi["product"] = {{"B", t.phi.product->B}, {"ratio", t.phi.product->ratio},
                          {"up_share", t.phi.product->up_share}, {"down_share", t.phi.product->down_share},
                          {"table_y_max", t.phi.table_y_max}, {"table_tail_mass", t.phi.table_tail_mass}};
    j["phi"] = phi;
    return j;
}

inline Json to_json(const EtaEstimate& e) {
    return Json{{"value", e.value},       {"std_error", e.std_error}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high},
                {"method", std::string(to_string(e.method))}, {"samples", e.samples}, {"seed", e.seed}};
}

inline Json to_json(const TailAsymptotic& t) {
    const auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    Json j{{"model", std::string(to_string(t.model))},
           {"gamma", t.gamma},
           {"secondary_gamma", t.secondary_gamma},
           {"y_ratio", opt(t.y_ratio)},
           {"prefactor_up", opt(t.prefactor_up)},
           {"prefactor_down", opt(t.prefactor_down)},
           {"escape_up", opt(t.escape_up)},
           {"escape_down", opt(t.escape_down)},
           {"drift", opt(t.drift)},
           {"B", opt(t.B)},
           {"secondary_weight", opt(t.secondary_weight)},
           {"provenance", std::string(to_string(t.provenance))},
           {"eta", t.eta ? to_json(*t.eta) : Json(nullptr)}};
    if (t.prefactor_up_ci) j["prefactor_up_ci"] = {t.prefactor_up_ci->first, t.prefactor_up_ci->second};
    if (t.prefactor_down_ci) j["prefactor_down_ci"] = {t.prefactor_down_ci->first, t.prefactor_down_ci->second};
    return j;
}

inline Json to_json(const AlphaLimits& a) {
    Json entries = Json::array();
    for (const auto& e : a.entries) {
        Json je{{"name", e.name}, {"limit", e.limit}};
        je["at_probe"] = e.at_probe ? Json(*e.at_probe) : Json(nullptr);
        je["gap"] = e.gap() ? Json(*e.gap()) : Json(nullptr);
        if (e.stated) je["stated"] = *e.stated;
        entries.push_back(je);
    }
    return Json{{"regime", std::string(to_string(a.regime))}, {"alpha_probe", a.alpha_probe}, {"entries", entries}};
}

inline Json to_json(const Mm1Comparison& c) {
    return Json{{"gamma_1", c.gamma_1}, {"mm1_ratio", c.mm1_ratio}, {"dominance", c.dominance},
                {"mm1_empty", c.mm1_empty}};
}

inline Json to_json(const TailFit& f) {
    return Json{{"gamma_est", f.gamma_est}, {"log_prefactor_est", f.log_prefactor_est}, {"k_min", f.k_min},
                {"k_max", f.k_max}, {"max_relative_deviation", f.max_relative_deviation}};
}

inline Json to_json(const RegimeVote& v) {
    return Json{{"excursions", v.excursions},
                {"up_dominated", v.up_dominated},
                {"down_dominated", v.down_dominated},
                {"histogram", v.histogram},
                {"mean_slope", v.mean_slope},
                {"verdict", v.verdict ? Json(std::string(to_string(*v.verdict))) : Json(nullptr)}};
}

/// Summary fields of a table; the entries go to CSV.
inline Json table_header_json(const StationaryTable& t) {
    return Json{{"model", std::string(to_string(t.model()))}, {"x_max", t.x_max()}, {"y_max", t.y_max()},
                {"residual", t.residual}, {"tail_mass_bound", t.tail_mass_bound},
                {"truncation_warning", t.truncation_warning}, {"total", t.total()}};
}

inline Json to_json(const StationaryTable& t) {
    Json j = table_header_json(t);
    Json entries = Json::array();
    for (std::size_t i = 0; i < t.size(); ++i) entries.push_back(Json::array({state_json(t.state_at(i)), t.values()[i]}));
    j["entries"] = entries;
    return j;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

inline void write_table_csv(std::ostream& out, const StationaryTable& t, const Meta& meta) {
    write_csv_meta(out, meta);
    const bool two = t.model() != Model::Model1;
    out << (two ? "x,y,sigma,prob\n" : "x,sigma,prob\n");
    for (std::size_t i = 0; i < t.size(); ++i) {
        const State s = t.state_at(i);
        out << s.x << ',';
        if (two) out << s.y << ',';
        out << to_string(s.status) << ',' << fmt17(t.values()[i]) << '\n';
    }
}

inline void write_trajectory_csv(std::ostream& out, const Trajectory& tr, const Meta& meta) {
    write_csv_meta(out, meta);
    const bool two = tr.model != Model::Model1;
    out << (two ? "step,x,y,status\n" : "step,x,status\n");
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
        const State& s = tr.states[i];
        out << static_cast<std::int64_t>(i) * tr.thin << ',' << s.x << ',';
        if (two) out << s.y << ',';
        out << to_string(s.status) << '\n';
    }
}

inline void write_excursions_csv(std::ostream& out, const std::vector<Excursion>& ex, const Meta& meta) {
    write_csv_meta(out, meta);
    out << "start,end,peak,down_fraction,slope\n";
    for (const auto& e : ex)
        out << e.start_step << ',' << e.end_step << ',' << e.peak << ',' << fmt17(e.down_fraction) << ','
            << fmt17(e.slope_estimate) << '\n';
}

/// Columns k, pi, model_prediction, relative_error.
struct TailFitRow {
    std::int64_t k = 0;
    double pi = 0.0;
    double prediction = 0.0;
};

inline void write_tailfit_csv(std::ostream& out, const std::vector<TailFitRow>& rows, const Meta& meta) {
    write_csv_meta(out, meta);
    out << "k,pi,model_prediction,relative_error\n";
    for (const auto& r : rows)
        out << r.k << ',' << fmt17(r.pi) << ',' << fmt17(r.prediction) << ',' << fmt17(r.pi / r.prediction - 1.0)
            << '\n';
}

inline void write_phi_csv(std::ostream& out, const MarkovPartStationary& phi, const Meta& meta) {
    write_csv_meta(out, meta);
    out << "y,sigma,probability\n";
    if (phi.table.empty()) {
        out << 0 << ",U," << fmt17(phi.up) << '\n' << 0 << ",D," << fmt17(phi.down) << '\n';
        return;
    }
    for (const auto& e : phi.table) out << e.y << ',' << to_string(e.status) << ',' << fmt17(e.prob) << '\n';
}

/// Reads a CSV written by this module: skips '#' lines, returns the header
/// and the rows as strings.
struct CsvData {
    std::string meta_line;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

inline CsvData read_csv(std::istream& in) {
    CsvData d;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (d.meta_line.empty()) d.meta_line = line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1);
            continue;
        }
        if (d.header.empty()) d.header = split_csv_line(line);
        else d.rows.push_back(split_csv_line(line));
    }
    return d;
}

inline void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
}

} // namespace urq
