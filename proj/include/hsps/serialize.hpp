#pragma once

// JSON and CSV encodings of configurations, reports and fits, plus the named presets.

#include <charconv>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsps/cascade_sim.hpp"
#include "hsps/detector.hpp"
#include "hsps/emitter_model.hpp"
#include "hsps/errors.hpp"
#include "hsps/estimation.hpp"
#include "hsps/hardware_budget.hpp"
#include "hsps/herald_emulator.hpp"

namespace hsps {

using Json = nlohmann::json;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline void check_keys(const Json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read_field(const Json& j, std::string_view where, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(where) + "." + key + ": wrong type");
    }
}

inline Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

inline Json to_json(const EmitterParams& p) {
    return {{"qy_x", p.qy_x},         {"qy_bx", p.qy_bx}, {"tau_x_ns", p.tau_x_ns},
            {"tau_bx_ns", p.tau_bx_ns}, {"beta", p.beta},   {"alpha", p.alpha}};
}

inline Json to_json(const NoiseParams& n) {
    return {{"eta_cn", n.eta_cn}, {"tau_cn_ns", n.tau_cn_ns}, {"eta_un", n.eta_un}};
}

inline Json to_json(const DetectorConfig& d) {
    return {{"r1", d.r1}, {"r2", d.r2}, {"dead_time_ns", detail::opt_json(d.dead_time_ns)},
            {"jitter_sigma_ps", d.jitter_sigma_ps}};
}

inline std::string_view timing_name(CascadeTiming t) {
    return t == CascadeTiming::kTableModel ? "table" : "conditioned";
}

inline CascadeTiming parse_timing(std::string_view s) {
    if (s == "table") return CascadeTiming::kTableModel;
    if (s == "conditioned") return CascadeTiming::kConditioned;
    throw ConfigError("unknown cascade timing '" + std::string(s) + "' (expected table|conditioned)");
}

inline Json to_json(const SimConfig& c) {
    return {{"emitter", to_json(c.emitter)},
            {"noise", to_json(c.noise)},
            {"detectors", to_json(c.detectors)},
            {"n_pulses", c.n_pulses},
            {"rep_period_ns", c.rep_period_ns},
            {"seed", c.seed},
            {"timing", timing_name(c.timing)}};
}

inline void from_json_into(const Json& j, EmitterParams& p) {
    detail::check_keys(j, "emitter", {"qy_x", "qy_bx", "tau_x_ns", "tau_bx_ns", "beta", "alpha"});
    detail::read_field(j, "emitter", "qy_x", p.qy_x);
    detail::read_field(j, "emitter", "qy_bx", p.qy_bx);
    detail::read_field(j, "emitter", "tau_x_ns", p.tau_x_ns);
    detail::read_field(j, "emitter", "tau_bx_ns", p.tau_bx_ns);
    detail::read_field(j, "emitter", "beta", p.beta);
    detail::read_field(j, "emitter", "alpha", p.alpha);
}

inline void from_json_into(const Json& j, NoiseParams& n) {
    detail::check_keys(j, "noise", {"eta_cn", "tau_cn_ns", "eta_un"});
    detail::read_field(j, "noise", "eta_cn", n.eta_cn);
    detail::read_field(j, "noise", "tau_cn_ns", n.tau_cn_ns);
    detail::read_field(j, "noise", "eta_un", n.eta_un);
}

inline void from_json_into(const Json& j, DetectorConfig& d) {
    detail::check_keys(j, "detectors", {"r1", "r2", "dead_time_ns", "jitter_sigma_ps"});
    detail::read_field(j, "detectors", "r1", d.r1);
    detail::read_field(j, "detectors", "r2", d.r2);
    if (j.contains("dead_time_ns")) {
        const Json& v = j.at("dead_time_ns");
        if (v.is_null()) d.dead_time_ns.reset();
        else if (v.is_number()) d.dead_time_ns = v.get<double>();
        else throw ConfigError("detectors.dead_time_ns: wrong type");
    }
    detail::read_field(j, "detectors", "jitter_sigma_ps", d.jitter_sigma_ps);
}

inline void from_json_into(const Json& j, SimConfig& c) {
    detail::check_keys(j, "simulation", {"emitter", "noise", "detectors", "n_pulses", "rep_period_ns", "seed", "timing"});
    if (j.contains("emitter")) from_json_into(j.at("emitter"), c.emitter);
    if (j.contains("noise")) from_json_into(j.at("noise"), c.noise);
    if (j.contains("detectors")) from_json_into(j.at("detectors"), c.detectors);
    detail::read_field(j, "simulation", "n_pulses", c.n_pulses);
    detail::read_field(j, "simulation", "rep_period_ns", c.rep_period_ns);
    detail::read_field(j, "simulation", "seed", c.seed);
    if (j.contains("timing")) {
        std::string t;
        detail::read_field(j, "simulation", "timing", t);
        c.timing = parse_timing(t);
    }
}

inline Json to_json(const HardwareConfig& h) {
    return {{"name", h.name},
            {"detector_latency_ps", h.detector_latency_ps},
            {"detector_jitter_ps", h.detector_jitter_ps},
            {"latch_delay_ps", h.latch_delay_ps},
            {"modulator_rise_ps", h.modulator_rise_ps},
            {"propagation_ps", h.propagation_ps},
            {"response_time_ps", response_time(h)}};
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"paper-nqd", "model-system", "ideal"};
    return names;
}

/// Named parameter sets.
///   paper-nqd:    measured room-temperature NQD; yields from calibration, detected noise
///                 1.4e-3 (correlated) and 4.4e-4 (uncorrelated) per pulse, 2 MHz excitation.
///                 Its lifetimes are not published; tau_x = 30 ns with the beta-consistent
///                 tau_bx is used.
///   model-system: plasmonically coupled NQD, QY 0.61/0.7, tau_x 1.6 ns, alpha 0.72, with the
///                 beta-consistent tau_bx (0.459 ns).
///   ideal:        unit yields and collection, lifetime ratio 4, resolving detector.
inline SimConfig preset(std::string_view name) {
    SimConfig c;
    if (name == "paper-nqd") {
        const double alpha = 0.088;
        c.emitter = EmitterParams::beta_scaled(0.1729, 0.0465, 30.0, 4.0, alpha);
        c.noise = NoiseParams{1.4e-3 / alpha, 0.3, 4.4e-4 / alpha};
        c.detectors = DetectorConfig{};
        c.rep_period_ns = 500.0;
    } else if (name == "model-system") {
        c.emitter = EmitterParams::beta_scaled(0.61, 0.7, 1.6, 4.0, 0.72);
        c.detectors = DetectorConfig{};
        c.rep_period_ns = 50.0;
    } else if (name == "ideal") {
        c.emitter = EmitterParams{1.0, 1.0, 1.0, 0.25, 4.0, 1.0};
        c.detectors = DetectorConfig::ideal();
        c.rep_period_ns = 50.0;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected paper-nqd|model-system|ideal)");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

inline Json to_json(const HeraldReport& r) {
    return {{"scheme", scheme_name(r.scheme)},
            {"t_f_ns", r.t_f_ns},
            {"t_c_ns", detail::opt_json(r.t_c_ns)},
            {"t_r_ns", detail::opt_json(r.t_r_ns)},
            {"alpha", r.alpha},
            {"n_pulses", r.n_pulses},
            {"n_triggers", r.n_triggers},
            {"n_success", r.n_success},
            {"n_success_corrected", r.n_success_corrected},
            {"n_signal_1", r.n_signal_1},
            {"n_signal_2", r.n_signal_2},
            {"n_signal_1_corrected", r.n_signal_1_corrected},
            {"n_signal_2_corrected", r.n_signal_2_corrected},
            {"n_over3", r.n_over3},
            {"efficiency", r.efficiency},
            {"purity", detail::opt_json(r.purity)},
            {"determinicity", detail::opt_json(r.determinicity)}};
}

inline Json to_json(const FitResult& f) {
    Json comps = Json::array();
    for (const ExpComponent& c : f.components) {
        comps.push_back({{"amplitude", c.amplitude},
                         {"lifetime_ns", c.lifetime_ns},
                         {"amplitude_sigma", c.amplitude_sigma},
                         {"lifetime_sigma", c.lifetime_sigma}});
    }
    return {{"components", comps},
            {"baseline", f.baseline},
            {"baseline_sigma", f.baseline_sigma},
            {"residual_norm", f.residual_norm},
            {"dof", f.dof},
            {"iterations", f.iterations},
            {"covariance_diagonal", f.covariance_diagonal},
            {"warnings", f.warnings}};
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

/// A header plus rows of cells; empty cells stand for absent values.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    static std::string cell(double v) { return format_double(v); }
    static std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }
    static std::string cell(std::uint64_t v) { return std::to_string(v); }

    Json to_json() const {
        Json out = Json::array();
        for (const auto& row : rows) {
            Json obj = Json::object();
            for (std::size_t i = 0; i < columns.size(); ++i) {
                const std::string& c = row.at(i);
                if (c.empty()) {
                    obj[columns[i]] = nullptr;
                    continue;
                }
                double v = 0.0;
                const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
                if (res.ec == std::errc() && res.ptr == c.data() + c.size()) obj[columns[i]] = v;
                else obj[columns[i]] = c;
            }
            out.push_back(std::move(obj));
        }
        return out;
    }
};

inline void write_csv(std::ostream& os, const Table& t) {
    for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << '\n';
    }
}

inline Table report_table(const std::vector<HeraldReport>& reports) {
    Table t;
    t.columns = {"scheme", "t_f_ns", "t_c_ns", "t_r_ns", "n_pulses", "n_triggers", "n_success",
                 "n_success_corrected", "n_signal_1", "n_signal_2_corrected", "efficiency", "purity",
                 "determinicity"};
    for (const HeraldReport& r : reports) {
        t.rows.push_back({std::string(scheme_name(r.scheme)), Table::cell(r.t_f_ns), Table::cell(r.t_c_ns),
                          Table::cell(r.t_r_ns), Table::cell(r.n_pulses), Table::cell(r.n_triggers),
                          Table::cell(r.n_success), Table::cell(r.n_success_corrected),
                          Table::cell(r.n_signal_1), Table::cell(r.n_signal_2_corrected),
                          Table::cell(r.efficiency), Table::cell(r.purity), Table::cell(r.determinicity)});
    }
    return t;
}

}  // namespace hsps
