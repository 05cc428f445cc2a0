#include "cli_app.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hsps/hsps.hpp"

namespace hsps::cli {
namespace {

namespace fs = std::filesystem;

using Knobs = std::map<std::string, std::optional<double>>;

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

void add_knob(CLI::App* app, Knobs& k, const std::string& name, const std::string& help) {
    app->add_option("--" + name, k[name], help);
}

void add_emitter_knobs(CLI::App* app, Knobs& k) {
    add_knob(app, k, "qyx", "exciton quantum yield");
    add_knob(app, k, "qybx", "biexciton quantum yield");
    add_knob(app, k, "tau-x", "exciton lifetime (ns)");
    add_knob(app, k, "tau-bx", "biexciton lifetime (ns); beta-scaled from the yields when omitted");
    add_knob(app, k, "beta", "BX/X radiative rate ratio");
    add_knob(app, k, "alpha", "collection efficiency");
}

void add_noise_knobs(CLI::App* app, Knobs& k) {
    add_knob(app, k, "eta-cn", "correlated noise per pulse, emitter level");
    add_knob(app, k, "eta-un", "uncorrelated noise per pulse, emitter level");
    add_knob(app, k, "tau-cn", "correlated noise decay (ns)");
}

void add_detector_knobs(CLI::App* app, Knobs& k, std::string& dead_time) {
    add_knob(app, k, "r1", "first splitter reflectivity");
    add_knob(app, k, "r2", "second splitter reflectivity");
    add_knob(app, k, "jitter-ps", "detector timing jitter sigma (ps)");
    app->add_option("--dead-time", dead_time,
                    "per-detector dead time in ns, 0 for number resolving, 'pulse' for one count per pulse");
}

void set(double& field, const Knobs& k, const char* name) {
    const auto it = k.find(name);
    if (it != k.end() && it->second) field = *it->second;
}

bool has(const Knobs& k, const char* name) {
    const auto it = k.find(name);
    return it != k.end() && it->second.has_value();
}

/// Applies emitter flags to `base`. Unless given explicitly, tau_bx follows the yields through
/// beta whenever a yield, tau_x or beta changes.
EmitterParams resolve_emitter(EmitterParams p, const Knobs& k) {
    set(p.qy_x, k, "qyx");
    set(p.qy_bx, k, "qybx");
    set(p.tau_x_ns, k, "tau-x");
    set(p.beta, k, "beta");
    set(p.alpha, k, "alpha");
    if (has(k, "tau-bx")) {
        set(p.tau_bx_ns, k, "tau-bx");
    } else if ((has(k, "qyx") || has(k, "qybx") || has(k, "tau-x") || has(k, "beta")) && p.qy_x > 0.0 &&
               p.qy_bx > 0.0) {
        p.tau_bx_ns = p.tau_x_ns * (p.qy_bx / p.qy_x) / p.beta;
    }
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return p;
}

NoiseParams resolve_noise(NoiseParams n, const Knobs& k) {
    set(n.eta_cn, k, "eta-cn");
    set(n.eta_un, k, "eta-un");
    set(n.tau_cn_ns, k, "tau-cn");
    try {
        n.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return n;
}

DetectorConfig resolve_detectors(DetectorConfig d, const Knobs& k, const std::string& dead_time) {
    set(d.r1, k, "r1");
    set(d.r2, k, "r2");
    set(d.jitter_sigma_ps, k, "jitter-ps");
    if (dead_time == "pulse") {
        d.dead_time_ns.reset();
    } else if (!dead_time.empty()) {
        try {
            std::size_t used = 0;
            d.dead_time_ns = std::stod(dead_time, &used);
            if (used != dead_time.size()) throw std::invalid_argument(dead_time);
        } catch (const std::logic_error&) {
            throw ConfigError("--dead-time: expected a number or 'pulse', got '" + dead_time + "'");
        }
    }
    d.validate();
    return d;
}

std::vector<double> linear_grid(double from, double to, double step) {
    if (!(step > 0.0) || !(to >= from) || !std::isfinite(from) || !std::isfinite(to)) {
        throw ConfigError("sweep grid needs finite --from <= --to and --step > 0");
    }
    const double span = (to - from) / step;
    if (span > 1e6) throw ConfigError("sweep grid has more than 1e6 points");
    const auto n = static_cast<std::size_t>(std::floor(span * (1.0 + 1e-12) + 1e-9)) + 1;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = from + static_cast<double>(i) * step;
    return g;
}

struct GridFlags {
    std::string param;
    double from = 0.0;
    double to = 0.0;
    double step = 0.0;

    void add(CLI::App* app, const std::string& help) {
        app->add_option("--sweep", param, help);
        app->add_option("--from", from, "first grid value");
        app->add_option("--to", to, "last grid value");
        app->add_option("--step", step, "grid spacing");
    }
    std::vector<double> values() const { return linear_grid(from, to, step); }
};

void add_format(CLI::App* app, std::string& format) {
    app->add_option("--format", format, "output format")->check(CLI::IsMember({"csv", "json"}));
}

void emit_table(std::ostream& out, const Table& t, const std::string& format) {
    if (format == "json") {
        out << t.to_json().dump(2) << '\n';
    } else {
        write_csv(out, t);
    }
}

fs::path sidecar_path(const fs::path& stream) { return fs::path(stream.string() + ".json"); }

std::optional<SimConfig> read_sidecar(const fs::path& stream) {
    const fs::path p = sidecar_path(stream);
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    if (!in) throw std::ios_base::failure("cannot open '" + p.string() + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("config")) throw ConfigError(p.string() + ": missing 'config'");
    SimConfig c;
    from_json_into(j.at("config"), c);
    return c;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

PulseGroups load_groups(const std::string& input, std::optional<double> rep_ns) {
    const EventStream s = read_stream_file(input);
    std::optional<std::uint64_t> period;
    if (rep_ns) {
        if (!(*rep_ns > 0.0)) throw ConfigError("--rep-ns must be > 0");
        period = static_cast<std::uint64_t>(ns_to_ps(*rep_ns));
    }
    return localize(s, period);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string preset;
    std::string config;
    std::optional<double> pulses;
    std::optional<std::uint64_t> seed;
    std::optional<double> rep_ns;
    std::string timing;
    std::string output;
    Knobs knobs;
    std::string dead_time;
};

void setup_simulate(CLI::App& app, SimulateArgs& a, std::function<void()>& action, std::ostream& out,
                    std::ostream& err) {
    CLI::App* cmd = app.add_subcommand("simulate", "Monte-Carlo cascade emission into a TTS1 (or .csv) stream");
    cmd->add_option("--preset", a.preset, "named parameter set")->check(CLI::IsMember(preset_names()));
    cmd->add_option("--config", a.config, "JSON simulation config (emitter, noise, detectors, n_pulses, ...)");
    cmd->add_option("--pulses", a.pulses, "number of excitation pulses (accepts 1e7)");
    cmd->add_option("--seed", a.seed, "RNG seed");
    cmd->add_option("--rep-ns", a.rep_ns, "repetition period (ns)");
    cmd->add_option("--timing", a.timing, "cascade timing model")->check(CLI::IsMember({"table", "conditioned"}));
    cmd->add_option("-o,--output", a.output, "output stream path")->required();
    add_emitter_knobs(cmd, a.knobs);
    add_noise_knobs(cmd, a.knobs);
    add_detector_knobs(cmd, a.knobs, a.dead_time);
    cmd->callback([&a, &action, &out, &err] {
        action = [&a, &out, &err] {
            SimConfig c = a.preset.empty() ? SimConfig{} : preset(a.preset);
            if (!a.config.empty()) from_json_into(read_json_file(a.config), c);
            c.emitter = resolve_emitter(c.emitter, a.knobs);
            c.noise = resolve_noise(c.noise, a.knobs);
            c.detectors = resolve_detectors(c.detectors, a.knobs, a.dead_time);
            if (a.pulses) {
                const double n = *a.pulses;
                if (!(n >= 1.0) || n != std::floor(n) || n > 9.007199254740992e15) {
                    throw ConfigError("n_pulses must be an integer >= 1");
                }
                c.n_pulses = static_cast<std::uint64_t>(n);
            }
            if (a.seed) c.seed = *a.seed;
            if (a.rep_ns) c.rep_period_ns = *a.rep_ns;
            if (!a.timing.empty()) c.timing = parse_timing(a.timing);
            c.validate();

            const EventStream s = simulate_stream(c);
            write_stream_file(s, a.output);
            Json side{{"config", to_json(c)},
                      {"preset", a.preset.empty() ? Json(nullptr) : Json(a.preset)},
                      {"format", is_csv_path(a.output) ? "csv" : "TTS1"},
                      {"n_records", s.records.size()},
                      {"warnings", c.warnings()}};
            std::ofstream sf(sidecar_path(a.output), std::ios::trunc);
            if (!sf) throw std::ios_base::failure("cannot write sidecar for '" + a.output + "'");
            sf << side.dump(2) << '\n';
            if (!sf) throw std::ios_base::failure("write failed for sidecar of '" + a.output + "'");
            for (const std::string& w : c.warnings()) err << "warning: " << w << '\n';
            out << side.dump(2) << '\n';
        };
    });
}

// ---------------------------------------------------------------------------
// emulate
// ---------------------------------------------------------------------------

struct EmulateArgs {
    std::string input;
    std::string scheme;
    std::optional<double> t_f = kDefaultFilterNs;
    std::optional<double> t_c;
    double t_r = 0.0;
    std::optional<double> rep_ns;
    GridFlags grid;
    bool overlay = false;
    std::string preset;
    std::string format = "csv";
    std::string config;
    Knobs knobs;
    std::string dead_time;
};

void setup_emulate(CLI::App& app, EmulateArgs& a, std::function<void()>& action, std::ostream& out,
                   std::ostream& err) {
    CLI::App* cmd = app.add_subcommand("emulate", "apply a purification scheme to a recorded stream");
    cmd->add_option("input,--input", a.input, "TTS1 or .csv stream")->required();
    cmd->add_option("--scheme", a.scheme, "timed|ash|tgf|bs")->required();
    cmd->add_option("--tf", a.t_f, "filter time (ns); photons before it are discarded");
    cmd->add_option("--tc", a.t_c, "TIMED cutoff (ns); defaults to the optimal cutoff from the sidecar");
    cmd->add_option("--tr", a.t_r, "ASH response time (ns)");
    cmd->add_option("--rep-ns", a.rep_ns, "pulse period for streams without sync tags (ns)");
    a.grid.add(cmd, "sweep tf|tc|tr over --from..--to");
    cmd->add_flag("--overlay-analytic", a.overlay, "add the emitter-model efficiency column");
    cmd->add_option("--preset", a.preset, "emitter parameters for the overlay")->check(CLI::IsMember(preset_names()));
    cmd->add_option("--config", a.config, "JSON file of option values");
    add_format(cmd, a.format);
    add_emitter_knobs(cmd, a.knobs);
    add_detector_knobs(cmd, a.knobs, a.dead_time);
    cmd->callback([&a, &action, &out, &err] {
        action = [&a, &out, &err] {
            const Scheme scheme = parse_scheme(a.scheme);
            const PulseGroups groups = load_groups(a.input, a.rep_ns);
            const std::optional<SimConfig> side = read_sidecar(a.input);
            std::optional<EmitterParams> emitter;
            if (!a.preset.empty()) emitter = preset(a.preset).emitter;
            else if (side) emitter = side->emitter;
            const bool emitter_flags = has(a.knobs, "qyx") || has(a.knobs, "qybx") || has(a.knobs, "tau-x") ||
                                       has(a.knobs, "tau-bx") || has(a.knobs, "beta");
            if (emitter || emitter_flags) emitter = resolve_emitter(emitter.value_or(EmitterParams{}), a.knobs);

            double alpha = 0.0;
            if (has(a.knobs, "alpha")) alpha = *a.knobs.at("alpha");
            else if (emitter) alpha = emitter->alpha;
            else throw ConfigError("--alpha is required when the stream has no sidecar");
            const DetectorConfig d = resolve_detectors(side ? side->detectors : DetectorConfig{}, a.knobs, a.dead_time);

            SchemeSettings base{scheme, a.t_f.value_or(0.0), 0.0, a.t_r};
            if (a.t_c) {
                base.t_c_ns = *a.t_c;
            } else if (scheme == Scheme::kTimed && a.grid.param != "tc") {
                if (!emitter) throw ConfigError("--tc is required when the stream has no sidecar");
                base.t_c_ns = tc_opt(emitter->tau_x_ns, emitter->tau_bx_ns);
            }
            std::vector<SchemeSettings> settings{base};
            if (!a.grid.param.empty()) {
                SweepParameter what = SweepParameter::kFilter;
                if (a.grid.param == "tc") what = SweepParameter::kCutoff;
                else if (a.grid.param == "tr") what = SweepParameter::kResponse;
                else if (a.grid.param != "tf") throw ConfigError("--sweep must be tf, tc or tr");
                settings = make_grid(base, what, a.grid.values());
            }
            if (a.overlay && !emitter) {
                throw ConfigError("--overlay-analytic needs emitter parameters (sidecar, --preset or flags)");
            }
            if (groups.dropped_before_first_sync() > 0) {
                err << "warning: " << groups.dropped_before_first_sync() << " photons before the first sync tag dropped\n";
            }

            const std::vector<HeraldReport> reports = sweep(groups, settings, alpha, d);
            Table t = report_table(reports);
            if (a.overlay) {
                t.columns.push_back("analytic_efficiency");
                for (std::size_t i = 0; i < reports.size(); ++i) {
                    const SchemeSettings& s = settings[i];
                    double v = 0.0;
                    switch (scheme) {
                        case Scheme::kTimed: v = eta_timed(*emitter, s.t_c_ns); break;
                        case Scheme::kAsh: v = eta_ash(*emitter, s.t_r_ns); break;
                        case Scheme::kTgf: v = tgf_metrics(*emitter, s.t_f_ns).efficiency; break;
                        case Scheme::kBeamSplitter: v = bs_herald_efficiency(*emitter); break;
                    }
                    t.rows[i].push_back(Table::cell(v));
                }
            }
            emit_table(out, t, a.format);
        };
    });
}

// ---------------------------------------------------------------------------
// analytic
// ---------------------------------------------------------------------------

struct AnalyticArgs {
    std::string op;
    std::string preset;
    GridFlags grid;
    std::string format = "csv";
    std::string config;
    Knobs knobs;
};

const std::vector<std::string>& analytic_ops() {
    static const std::vector<std::string> ops{"eta-timed", "eta-ash",    "eta-bs",       "tgf",
                                              "tgf-gate",  "tc-opt",     "path-table",   "standalone",
                                              "noise-purity", "correction"};
    return ops;
}

std::vector<std::string> analytic_columns(const std::string& op) {
    if (op == "eta-timed") return {"t_c_ns", "efficiency", "determinicity"};
    if (op == "eta-ash") return {"t_r_ns", "efficiency", "determinicity"};
    if (op == "eta-bs") return {"efficiency"};
    if (op == "tgf") return {"t_f_ns", "efficiency", "purity"};
    if (op == "tgf-gate") return {"purity_target", "t_f_ns", "efficiency", "purity"};
    if (op == "tc-opt") return {"t_c_opt_ns"};
    if (op == "path-table") return {"gate_ns", "p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "sum"};
    if (op == "standalone") return {"efficiency", "purity"};
    if (op == "noise-purity") return {"purity_all_noise", "purity_uncorrelated"};
    return {"c2", "c3"};
}

double need(const Knobs& k, const char* name, const std::string& op) {
    const auto it = k.find(name);
    if (it == k.end() || !it->second) throw ConfigError(op + " needs --" + name);
    return *it->second;
}

std::vector<std::string> analytic_row(const std::string& op, const EmitterParams& p, const Knobs& k,
                                      bool in_sweep) {
    using C = Table;
    if (op == "eta-timed") {
        const double tc = has(k, "tc") ? *k.at("tc") : tc_opt(p.tau_x_ns, p.tau_bx_ns);
        return {C::cell(tc), C::cell(eta_timed(p, tc)), C::cell(determinicity(p, Scheme::kTimed, tc))};
    }
    if (op == "eta-ash") {
        const double tr = has(k, "tr") ? *k.at("tr") : 0.0;
        return {C::cell(tr), C::cell(eta_ash(p, tr)), C::cell(determinicity(p, Scheme::kAsh, tr))};
    }
    if (op == "eta-bs") return {C::cell(bs_herald_efficiency(p))};
    if (op == "tgf") {
        const double tf = need(k, "tf", op);
        const SchemeMetrics m = tgf_metrics(p, tf);
        return {C::cell(tf), C::cell(m.efficiency), C::cell(m.purity)};
    }
    if (op == "tgf-gate") {
        const double s = has(k, "purity") ? *k.at("purity") : kDefaultPurityTarget;
        try {
            const TgfGate g = solve_tgf_gate(p, s);
            return {C::cell(s), C::cell(g.t_f_ns), C::cell(g.efficiency), C::cell(g.purity)};
        } catch (const NoSolutionError&) {
            if (!in_sweep) throw;
            return {C::cell(s), "", "", ""};
        }
    }
    if (op == "tc-opt") return {C::cell(tc_opt(p.tau_x_ns, p.tau_bx_ns))};
    if (op == "path-table") {
        const double gate = need(k, "gate", op);
        const PathProbs t = path_probabilities(p, gate);
        std::vector<std::string> row{C::cell(gate)};
        for (int i = 1; i <= 8; ++i) row.push_back(C::cell(t.row(i)));
        row.push_back(C::cell(t.sum()));
        return row;
    }
    if (op == "standalone") {
        const SchemeMetrics m = standalone_metrics(p);
        return {C::cell(m.efficiency), C::cell(m.purity)};
    }
    if (op == "noise-purity") {
        const NoiseParams n = resolve_noise(NoiseParams{}, k);
        return {C::cell(noise_adjusted_purity(p, n, true)), C::cell(noise_adjusted_purity(p, n, false))};
    }
    const CorrectionFactors f = correction_factors(has(k, "r1") ? *k.at("r1") : 0.4, has(k, "r2") ? *k.at("r2") : 0.5);
    return {C::cell(f.c2), C::cell(f.c3)};
}

void setup_analytic(CLI::App& app, AnalyticArgs& a, std::function<void()>& action, std::ostream& out) {
    CLI::App* cmd = app.add_subcommand("analytic", "evaluate emitter-model formulas, optionally over a grid");
    cmd->add_option("op,--op", a.op, "operation")->required()->check(CLI::IsMember(analytic_ops()));
    cmd->add_option("--preset", a.preset, "base emitter parameters")->check(CLI::IsMember(preset_names()));
    cmd->add_option("--config", a.config, "JSON file of option values");
    add_emitter_knobs(cmd, a.knobs);
    add_noise_knobs(cmd, a.knobs);
    add_knob(cmd, a.knobs, "tc", "TIMED cutoff (ns); optimal when omitted");
    add_knob(cmd, a.knobs, "tr", "ASH response time (ns)");
    add_knob(cmd, a.knobs, "tf", "TGF gate (ns)");
    add_knob(cmd, a.knobs, "gate", "path-table gate (ns)");
    add_knob(cmd, a.knobs, "purity", "TGF purity target");
    add_knob(cmd, a.knobs, "r1", "first splitter reflectivity");
    add_knob(cmd, a.knobs, "r2", "second splitter reflectivity");
    a.grid.add(cmd, "sweep any numeric option (e.g. tc, tr, qyx, alpha) over --from..--to");
    add_format(cmd, a.format);
    cmd->callback([&a, &action, &out] {
        action = [&a, &out] {
            const EmitterParams base = a.preset.empty() ? EmitterParams{} : preset(a.preset).emitter;
            Table t;
            if (!a.grid.param.empty()) {
                if (!a.knobs.count(a.grid.param)) throw ConfigError("--sweep: unknown parameter '" + a.grid.param + "'");
                t.columns.push_back(a.grid.param);
            }
            for (const std::string& c : analytic_columns(a.op)) t.columns.push_back(c);
            if (a.grid.param.empty()) {
                t.rows.push_back(analytic_row(a.op, resolve_emitter(base, a.knobs), a.knobs, false));
            } else {
                for (const double v : a.grid.values()) {
                    Knobs k = a.knobs;
                    k[a.grid.param] = v;
                    std::vector<std::string> row{Table::cell(v)};
                    for (std::string& c : analytic_row(a.op, resolve_emitter(base, k), k, true)) row.push_back(std::move(c));
                    t.rows.push_back(std::move(row));
                }
            }
            emit_table(out, t, a.format);
        };
    });
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
    std::string input;
    int k = 3;
    std::uint64_t bin_ps = 50;
    std::optional<double> range_ns;
    double t_start = 0.0;
    std::optional<double> t_end;
    std::size_t max_iter = 500;
    std::optional<double> alpha;
    double beta = 4.0;
    std::optional<double> p1;
    double t_f = kDefaultFilterNs;
    double ceiling = 0.45;
    std::optional<double> noise_cut;
    std::optional<double> rep_ns;
    std::string config;
};

void setup_fit(CLI::App& app, FitArgs& a, std::function<void()>& action, std::ostream& out, std::ostream& err) {
    CLI::App* cmd = app.add_subcommand("fit", "lifetime histogram, multi-exponential fit and yield calibration");
    cmd->add_option("input,--input", a.input, "TTS1 or .csv stream")->required();
    cmd->add_option("--k", a.k, "number of exponential components (1-3)");
    cmd->add_option("--bin-ps", a.bin_ps, "histogram bin width (ps)");
    cmd->add_option("--range-ns", a.range_ns, "histogram range (ns); the pulse period when omitted");
    cmd->add_option("--t-start", a.t_start, "first fitted time (ns)");
    cmd->add_option("--t-end", a.t_end, "last fitted time (ns)");
    cmd->add_option("--max-iter", a.max_iter, "iteration cap per fit start");
    cmd->add_option("--alpha", a.alpha, "collection efficiency for yield calibration (sidecar value when omitted)");
    cmd->add_option("--beta", a.beta, "BX/X radiative rate ratio");
    cmd->add_option("--p1", a.p1, "detection probability per pulse; measured after --tf when omitted");
    cmd->add_option("--tf", a.t_f, "filter time for measuring p1 (ns)");
    cmd->add_option("--noise-ceiling", a.ceiling, "components at or below this lifetime (ns) are noise");
    cmd->add_option("--noise-cut", a.noise_cut, "also estimate noise rates, counting photons after this time (ns)");
    cmd->add_option("--rep-ns", a.rep_ns, "pulse period for streams without sync tags (ns)");
    cmd->add_option("--config", a.config, "JSON file of option values");
    cmd->callback([&a, &action, &out, &err] {
        action = [&a, &out, &err] {
            const PulseGroups groups = load_groups(a.input, a.rep_ns);
            const std::optional<SimConfig> side = read_sidecar(a.input);
            std::optional<std::uint64_t> range;
            if (a.range_ns) range = static_cast<std::uint64_t>(ns_to_ps(*a.range_ns));
            else if (groups.rep_period_ps() > 0) range = groups.rep_period_ps();
            if (a.bin_ps == 0) throw ConfigError("--bin-ps must be > 0");
            const Histogram h = lifetime_histogram(groups, a.bin_ps, range);
            FitOptions opt;
            opt.t_start_ns = a.t_start;
            if (a.t_end) opt.t_end_ns = *a.t_end;
            opt.max_iterations = a.max_iter;
            const FitResult f = fit_exponentials(h, a.k, opt);

            Json result{{"histogram", {{"bin_width_ps", h.bin_width_ps}, {"bins", h.counts.size()}, {"total", h.total}}},
                        {"fit", to_json(f)}};
            for (const std::string& w : f.warnings) err << "warning: " << w << '\n';

            std::optional<double> alpha = a.alpha;
            if (!alpha && side) alpha = side->emitter.alpha;
            if (alpha) {
                const double p1 = a.p1 ? *a.p1 : measure_p1(groups, a.t_f);
                result["calibration"] = {{"alpha", *alpha}, {"beta", a.beta}, {"p1", p1}};
                result["derived"] = to_json(derive_emitter_params(f, *alpha, a.beta, p1, a.ceiling));
            } else {
                err << "note: no --alpha and no sidecar; skipping yield calibration\n";
                result["derived"] = nullptr;
            }
            if (a.noise_cut) {
                const DetectorConfig d = side ? side->detectors : DetectorConfig{};
                const NoiseEstimate n = estimate_noise_rates(groups, d, *a.noise_cut);
                for (const std::string& w : n.warnings) err << "warning: " << w << '\n';
                result["noise"] = {{"eta_total_detected", n.eta_total_detected},
                                   {"eta_un_detected", n.eta_un_detected},
                                   {"eta_cn_detected", n.eta_cn_detected},
                                   {"n2m", n.n2m},
                                   {"n3m", n.n3m},
                                   {"warnings", n.warnings}};
            }
            out << result.dump(2) << '\n';
        };
    });
}

// ---------------------------------------------------------------------------
// budget
// ---------------------------------------------------------------------------

struct HardwareFlags {
    std::string detector = "snspd";
    std::string layout = "on-chip";
    Knobs knobs;

    void add(CLI::App* cmd) {
        cmd->add_option("--detector", detector, "snspd|spad")->check(CLI::IsMember({"snspd", "spad"}));
        cmd->add_option("--layout", layout, "on-chip|free-space")->check(CLI::IsMember({"on-chip", "free-space"}));
        add_knob(cmd, knobs, "latency-ps", "detector latency override (ps)");
        add_knob(cmd, knobs, "jitter-ps", "detector jitter override (ps)");
        add_knob(cmd, knobs, "latch-ps", "latch delay override (ps)");
        add_knob(cmd, knobs, "modulator-ps", "modulator rise override (ps)");
        add_knob(cmd, knobs, "propagation-ps", "propagation delay override (ps)");
    }

    HardwareConfig resolve() const {
        HardwareConfig h = HardwareConfig::preset(parse_detector_kind(detector), parse_layout(layout));
        set(h.detector_latency_ps, knobs, "latency-ps");
        set(h.detector_jitter_ps, knobs, "jitter-ps");
        set(h.latch_delay_ps, knobs, "latch-ps");
        set(h.modulator_rise_ps, knobs, "modulator-ps");
        set(h.propagation_ps, knobs, "propagation-ps");
        h.validate();
        return h;
    }
};

std::vector<HardwareConfig> all_hardware() {
    std::vector<HardwareConfig> v;
    for (DetectorKind d : {DetectorKind::kSnspd, DetectorKind::kSpad}) {
        for (Layout l : {Layout::kOnChip, Layout::kFreeSpace}) v.push_back(HardwareConfig::preset(d, l));
    }
    return v;
}

struct BudgetArgs {
    HardwareFlags hw;
    bool all = false;
    std::string scheme;
    double rep_rate_hz = 200e6;
    double purity = kDefaultPurityTarget;
    std::string preset = "model-system";
    Knobs knobs;
    std::size_t steps = 20;
    double map_tr = 0.0;
    double from = 0.05;
    double to = 3.0;
    double step = 0.05;
    std::string format = "csv";
    std::string config;
};

void setup_budget(CLI::App& app, BudgetArgs& a, std::function<void()>& action, std::ostream& out,
                  std::ostream& err) {
    CLI::App* cmd = app.add_subcommand("budget", "switch response times and projected single-photon rates");
    cmd->require_subcommand(1);

    CLI::App* rt = cmd->add_subcommand("response-time", "total switch response time of a hardware configuration");
    a.hw.add(rt);
    rt->add_flag("--all", a.all, "list every detector/layout preset");
    rt->add_option("--config", a.config, "JSON file of option values");
    add_format(rt, a.format);
    rt->callback([&a, &action, &out] {
        action = [&a, &out] {
            Table t;
            t.columns = {"name", "detector_latency_ps", "detector_jitter_ps", "latch_delay_ps", "modulator_rise_ps",
                         "propagation_ps", "response_time_ps"};
            for (const HardwareConfig& h : a.all ? all_hardware() : std::vector<HardwareConfig>{a.hw.resolve()}) {
                t.rows.push_back({h.name, Table::cell(h.detector_latency_ps), Table::cell(h.detector_jitter_ps),
                                  Table::cell(h.latch_delay_ps), Table::cell(h.modulator_rise_ps),
                                  Table::cell(h.propagation_ps), Table::cell(response_time(h))});
            }
            emit_table(out, t, a.format);
        };
    });

    CLI::App* rate = cmd->add_subcommand("rate", "projected single-photon rate per scheme");
    a.hw.add(rate);
    rate->add_option("--scheme", a.scheme, "timed|ash|tgf|bs; all schemes when omitted");
    rate->add_option("--rep-rate", a.rep_rate_hz, "excitation repetition rate (Hz)");
    rate->add_option("--purity", a.purity, "TGF purity target");
    rate->add_option("--preset", a.preset, "base emitter parameters")->check(CLI::IsMember(preset_names()));
    rate->add_option("--config", a.config, "JSON file of option values");
    add_emitter_knobs(rate, a.knobs);
    add_format(rate, a.format);
    rate->callback([&a, &action, &out] {
        action = [&a, &out] {
            const EmitterParams p = resolve_emitter(preset(a.preset).emitter, a.knobs);
            const HardwareConfig hw = a.hw.resolve();
            std::vector<Scheme> schemes{Scheme::kAsh, Scheme::kTimed, Scheme::kTgf, Scheme::kBeamSplitter};
            if (!a.scheme.empty()) schemes = {parse_scheme(a.scheme)};
            Table t;
            t.columns = {"scheme", "hardware", "rep_rate_hz", "efficiency", "rate_hz"};
            for (const Scheme s : schemes) {
                std::optional<double> eff;
                try {
                    eff = scheme_efficiency(p, s, hw, a.purity);
                } catch (const NoSolutionError&) {
                    if (schemes.size() == 1) throw;
                }
                t.rows.push_back({std::string(scheme_name(s)), hw.name, Table::cell(a.rep_rate_hz), Table::cell(eff),
                                  eff ? Table::cell(*eff * a.rep_rate_hz) : std::string()});
            }
            emit_table(out, t, a.format);
        };
    });

    CLI::App* map = cmd->add_subcommand("map", "eta_ASH - eta_TGF over a (QY_X, QY_BX) grid");
    map->add_option("--steps", a.steps, "grid points per axis; yields k/steps for k = 1..steps");
    map->add_option("--purity", a.purity, "TGF purity target");
    map->add_option("--tr", a.map_tr, "ASH response time (ns)");
    map->add_option("--config", a.config, "JSON file of option values");
    add_knob(map, a.knobs, "alpha", "collection efficiency");
    add_knob(map, a.knobs, "beta", "BX/X radiative rate ratio");
    add_knob(map, a.knobs, "tau-x", "exciton lifetime (ns)");
    add_format(map, a.format);
    map->callback([&a, &action, &out] {
        action = [&a, &out] {
            if (a.steps < 1) throw ConfigError("--steps must be >= 1");
            std::vector<double> g(a.steps);
            for (std::size_t i = 0; i < a.steps; ++i) g[i] = static_cast<double>(i + 1) / static_cast<double>(a.steps);
            double alpha = 1.0;
            double beta = 4.0;
            double tau_x = 1.0;
            set(alpha, a.knobs, "alpha");
            set(beta, a.knobs, "beta");
            set(tau_x, a.knobs, "tau-x");
            const DifferenceMap m = scheme_difference_map(g, g, a.purity, alpha, beta, tau_x, a.map_tr);
            Table t;
            t.columns = {"qy_x", "qy_bx", "eta_ash_minus_eta_tgf"};
            for (std::size_t i = 0; i < m.qy_x.size(); ++i) {
                for (std::size_t j = 0; j < m.qy_bx.size(); ++j) {
                    t.rows.push_back({Table::cell(m.qy_x[i]), Table::cell(m.qy_bx[j]), Table::cell(m.at(i, j))});
                }
            }
            emit_table(out, t, a.format);
        };
    });

    CLI::App* curve = cmd->add_subcommand("lifetime-curve", "rates against exciton lifetime at 1/(3 tau_x) repetition");
    curve->add_option("--from", a.from, "shortest tau_x (ns)");
    curve->add_option("--to", a.to, "longest tau_x (ns)");
    curve->add_option("--step", a.step, "tau_x spacing (ns)");
    curve->add_option("--purity", a.purity, "TGF purity target");
    curve->add_option("--preset", a.preset, "base emitter parameters")->check(CLI::IsMember(preset_names()));
    curve->add_option("--config", a.config, "JSON file of option values");
    add_emitter_knobs(curve, a.knobs);
    add_format(curve, a.format);
    curve->callback([&a, &action, &out, &err] {
        action = [&a, &out, &err] {
            const EmitterParams p = resolve_emitter(preset(a.preset).emitter, a.knobs);
            const LifetimeCurves c = rate_vs_lifetime_curve(p, linear_grid(a.from, a.to, a.step), all_hardware(), a.purity);
            Table t;
            t.columns = {"tau_x_ns", "rep_rate_hz"};
            for (const RateCurve& rc : c.curves) t.columns.push_back(rc.label);
            for (std::size_t i = 0; i < c.tau_x_ns.size(); ++i) {
                std::vector<std::string> row{Table::cell(c.tau_x_ns[i]), Table::cell(c.rep_rate_hz[i])};
                for (const RateCurve& rc : c.curves) row.push_back(Table::cell(rc.rate_hz[i]));
                t.rows.push_back(std::move(row));
            }
            Json cross = Json::array();
            for (const Crossover& x : c.crossovers) cross.push_back({{"a", x.a}, {"b", x.b}, {"tau_x_ns", x.tau_x_ns}});
            if (a.format == "json") {
                out << Json{{"curves", t.to_json()}, {"crossovers", cross}}.dump(2) << '\n';
            } else {
                write_csv(out, t);
                for (const Crossover& x : c.crossovers) {
                    err << "crossover: " << x.a << " = " << x.b << " at tau_x " << format_double(x.tau_x_ns) << " ns\n";
                }
            }
        };
    });
}

// ---------------------------------------------------------------------------
// --config expansion
// ---------------------------------------------------------------------------

std::string json_scalar_text(const Json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return v.dump();
    if (v.is_number()) return format_double(v.get<double>());
    throw ConfigError("config: key '" + key + "' must be a number, string, boolean or array of those");
}

/// Replaces `--config FILE` of every command except simulate by the equivalent flags, placed
/// before the explicit ones so that the command line wins.
void expand_config(CLI::App& app, std::vector<std::string>& args) {
    CLI::App* cmd = &app;
    std::size_t insert_at = 0;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i].rfind('-', 0) == 0) continue;
        CLI::App* sub = cmd->get_subcommand_no_throw(args[i]);
        if (!sub) break;
        cmd = sub;
        insert_at = i + 1;
    }
    if (cmd == &app || cmd->get_name() == "simulate") return;

    std::optional<std::string> path;
    for (std::size_t i = insert_at; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!path) return;
    const Json j = read_json_file(*path);
    if (!j.is_object()) throw ConfigError(*path + ": expected a JSON object");

    std::vector<std::string> tokens;
    for (const auto& [key, value] : j.items()) {
        const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (!opt || key == "config") throw ConfigError(*path + ": unknown key '" + key + "'");
        if (value.is_boolean()) {
            if (opt->get_type_size() != 0) throw ConfigError(*path + ": key '" + key + "' is not a flag");
            if (value.get<bool>()) tokens.push_back("--" + key);
            continue;
        }
        if (value.is_null()) continue;
        if (value.is_array()) {
            for (const Json& v : value) {
                tokens.push_back("--" + key);
                tokens.push_back(json_scalar_text(v, key));
            }
            continue;
        }
        tokens.push_back("--" + key);
        tokens.push_back(json_scalar_text(value, key));
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), tokens.begin(), tokens.end());
}

int fail(std::ostream& err, int code, const char* kind, const std::string& message, Json extra = Json::object()) {
    Json body{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
    for (auto& [k, v] : extra.items()) body["error"][k] = v;
    err << body.dump() << '\n';
    return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Heralded single-photon purification toolkit", "hsps"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::function<void()> action;
    SimulateArgs sim;
    EmulateArgs emu;
    AnalyticArgs ana;
    FitArgs fit;
    BudgetArgs bud;
    setup_simulate(app, sim, action, out, err);
    setup_emulate(app, emu, action, out, err);
    setup_analytic(app, ana, action, out);
    setup_fit(app, fit, action, out, err);
    setup_budget(app, bud, action, out, err);

    try {
        std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
        expand_config(app, args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (action) action();
        return kExitOk;
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << e.what() << '\n';
            return kExitOk;
        }
        return fail(err, kExitConfig, "config", e.what());
    } catch (const ConfigError& e) {
        return fail(err, kExitConfig, "config", e.what());
    } catch (const DomainError& e) {
        return fail(err, kExitConfig, "domain", e.what());
    } catch (const FitError& e) {
        return fail(err, kExitSolver, "fit", e.what(), {{"best", to_json(e.best())}});
    } catch (const NoSolutionError& e) {
        return fail(err, kExitSolver, "no_solution", e.what());
    } catch (const EstimationError& e) {
        return fail(err, kExitSolver, "estimation", e.what());
    } catch (const ParseError& e) {
        return fail(err, kExitIo, "parse", e.what(), {{"offset", e.offset()}});
    } catch (const std::ios_base::failure& e) {
        return fail(err, kExitIo, "io", e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(err, kExitIo, "io", e.what());
    }
}

}  // namespace hsps::cli
