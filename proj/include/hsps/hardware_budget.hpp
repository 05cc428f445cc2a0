#pragma once

// Response-time budgets for active switching and single-photon rate projections.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hsps/emitter_model.hpp"
#include "hsps/errors.hpp"

namespace hsps {

enum class DetectorKind { kSnspd, kSpad };
enum class Layout { kOnChip, kFreeSpace };

inline DetectorKind parse_detector_kind(std::string_view s) {
    if (s == "snspd" || s == "SNSPD") return DetectorKind::kSnspd;
    if (s == "spad" || s == "SPAD") return DetectorKind::kSpad;
    throw ConfigError("unknown detector '" + std::string(s) + "' (expected snspd|spad)");
}

inline Layout parse_layout(std::string_view s) {
    if (s == "on-chip") return Layout::kOnChip;
    if (s == "free-space") return Layout::kFreeSpace;
    throw ConfigError("unknown layout '" + std::string(s) + "' (expected on-chip|free-space)");
}

inline std::string_view detector_kind_name(DetectorKind d) { return d == DetectorKind::kSnspd ? "snspd" : "spad"; }
inline std::string_view layout_name(Layout l) { return l == Layout::kOnChip ? "on-chip" : "free-space"; }

/// Component delays of an active switch, in ps.
struct HardwareConfig {
    double detector_latency_ps = 50.0;
    double detector_jitter_ps = 15.0;
    double latch_delay_ps = 185.0;
    double modulator_rise_ps = 15.0;
    double propagation_ps = 0.0;
    std::string name = "snspd/on-chip";

    void validate() const {
        for (double v : {detector_latency_ps, detector_jitter_ps, latch_delay_ps, modulator_rise_ps, propagation_ps}) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("hardware delays must be finite and >= 0");
        }
    }

    static HardwareConfig preset(DetectorKind det, Layout layout) {
        HardwareConfig c;
        if (det == DetectorKind::kSpad) {
            c.detector_latency_ps = 2000.0;
            c.detector_jitter_ps = 50.0;
        }
        c.propagation_ps = layout == Layout::kFreeSpace ? 500.0 : 0.0;
        c.name = std::string(detector_kind_name(det)) + "/" + std::string(layout_name(layout));
        return c;
    }
};

/// Total switch response time in ps. Jitter is budgeted as a fixed worst-case offset.
inline double response_time(const HardwareConfig& c) {
    c.validate();
    return c.detector_latency_ps + c.detector_jitter_ps + c.latch_delay_ps + c.modulator_rise_ps +
           c.propagation_ps;
}

inline constexpr double kDefaultPurityTarget = 0.995;

/// Scheme efficiency at its operating point: ASH at the response time of `hw`, TIMED at the
/// optimal cutoff, TGF at the gate reaching `s_target`.
inline double scheme_efficiency(const EmitterParams& p, Scheme scheme, const HardwareConfig& hw,
                                double s_target = kDefaultPurityTarget) {
    p.validate();
    switch (scheme) {
        case Scheme::kAsh: return eta_ash(p, response_time(hw) * 1e-3);
        case Scheme::kTimed: return eta_timed(p, tc_opt(p.tau_x_ns, p.tau_bx_ns));
        case Scheme::kTgf: return solve_tgf_gate(p, s_target).efficiency;
        case Scheme::kBeamSplitter: return bs_herald_efficiency(p);
    }
    throw DomainError("unknown scheme");
}

/// Single-photon rate in Hz.
inline double rate_projection(const EmitterParams& p, Scheme scheme, double rep_rate_hz,
                              const HardwareConfig& hw = {}, double s_target = kDefaultPurityTarget) {
    detail::require(rep_rate_hz > 0.0 && std::isfinite(rep_rate_hz), "repetition rate must be > 0");
    return rep_rate_hz * scheme_efficiency(p, scheme, hw, s_target);
}

/// eta_ASH(T_R) - eta_TGF(S) over a (QY_X, QY_BX) grid with beta-scaled lifetimes. Cells where
/// the purity target is unreachable are empty.
struct DifferenceMap {
    std::vector<double> qy_x;
    std::vector<double> qy_bx;
    std::vector<std::optional<double>> cells;  // row-major, qy_x outer

    const std::optional<double>& at(std::size_t ix, std::size_t ibx) const { return cells.at(ix * qy_bx.size() + ibx); }
};

inline DifferenceMap scheme_difference_map(const std::vector<double>& qy_x_grid,
                                           const std::vector<double>& qy_bx_grid, double s_target,
                                           double alpha, double beta, double tau_x_ns = 1.0,
                                           double t_r_ns = 0.0) {
    detail::require(!qy_x_grid.empty() && !qy_bx_grid.empty(), "difference map needs a non-empty grid");
    detail::require(s_target > 0.0 && s_target < 1.0, "purity target must be in (0,1)");
    DifferenceMap m{qy_x_grid, qy_bx_grid, {}};
    m.cells.reserve(qy_x_grid.size() * qy_bx_grid.size());
    for (const double qx : qy_x_grid) {
        for (const double qbx : qy_bx_grid) {
            detail::require(qx > 0.0 && qx <= 1.0 && qbx > 0.0 && qbx <= 1.0,
                            "difference map yields must be in (0,1]");
            const EmitterParams p = EmitterParams::beta_scaled(qx, qbx, tau_x_ns, beta, alpha);
            try {
                m.cells.emplace_back(eta_ash(p, t_r_ns) - solve_tgf_gate(p, s_target).efficiency);
            } catch (const NoSolutionError&) {
                m.cells.emplace_back(std::nullopt);
            }
        }
    }
    return m;
}

struct RateCurve {
    std::string label;
    Scheme scheme = Scheme::kAsh;
    std::vector<double> rate_hz;  // one per lifetime
};

struct Crossover {
    std::string a;
    std::string b;
    double tau_x_ns = 0.0;
};

struct LifetimeCurves {
    std::vector<double> tau_x_ns;
    std::vector<double> rep_rate_hz;
    std::vector<RateCurve> curves;
    std::vector<Crossover> crossovers;
};

/// Repetition rate 1/(3 tau_x) used for the lifetime comparison.
inline double lifetime_rep_rate_hz(double tau_x_ns) { return 1e9 / (3.0 * tau_x_ns); }

namespace detail {

inline EmitterParams with_tau_x(const EmitterParams& p, double tau_x_ns) {
    EmitterParams q = p;
    q.tau_bx_ns = p.tau_bx_ns * tau_x_ns / p.tau_x_ns;
    q.tau_x_ns = tau_x_ns;
    return q;
}

}  // namespace detail

/// Rates of ASH (one curve per hardware config), TIMED and TGF against the exciton lifetime,
/// keeping tau_bx/tau_x fixed. Crossovers between each ASH curve and the other schemes are
/// located by bisection between bracketing grid points.
inline LifetimeCurves rate_vs_lifetime_curve(const EmitterParams& tmpl, const std::vector<double>& tau_x_grid,
                                             const std::vector<HardwareConfig>& configs,
                                             double s_target = kDefaultPurityTarget) {
    tmpl.validate();
    detail::require(!tau_x_grid.empty(), "lifetime grid must not be empty");
    for (const double t : tau_x_grid) detail::require(t > 0.0, "lifetime grid values must be > 0");
    LifetimeCurves out;
    out.tau_x_ns = tau_x_grid;
    for (const double t : tau_x_grid) out.rep_rate_hz.push_back(lifetime_rep_rate_hz(t));

    auto rate_at = [&](Scheme s, const HardwareConfig& hw, double t) {
        return rate_projection(detail::with_tau_x(tmpl, t), s, lifetime_rep_rate_hz(t), hw, s_target);
    };
    struct CurveDef {
        std::string label;
        Scheme scheme;
        HardwareConfig hw;
    };
    std::vector<CurveDef> defs;
    for (const HardwareConfig& hw : configs) defs.push_back({"ASH " + hw.name, Scheme::kAsh, hw});
    defs.push_back({"TIMED", Scheme::kTimed, {}});
    defs.push_back({"TGF", Scheme::kTgf, {}});
    for (const CurveDef& s : defs) {
        RateCurve c{s.label, s.scheme, {}};
        for (const double t : tau_x_grid) c.rate_hz.push_back(rate_at(s.scheme, s.hw, t));
        out.curves.push_back(std::move(c));
    }

    for (std::size_t i = 0; i < configs.size(); ++i) {
        for (std::size_t j = configs.size(); j < defs.size(); ++j) {
            auto diff = [&](double t) { return rate_at(Scheme::kAsh, defs[i].hw, t) - rate_at(defs[j].scheme, defs[j].hw, t); };
            for (std::size_t g = 1; g < tau_x_grid.size(); ++g) {
                double lo = tau_x_grid[g - 1];
                double hi = tau_x_grid[g];
                double f_lo = out.curves[i].rate_hz[g - 1] - out.curves[j].rate_hz[g - 1];
                const double f_hi = out.curves[i].rate_hz[g] - out.curves[j].rate_hz[g];
                if (f_lo == 0.0 || (f_lo < 0.0) == (f_hi < 0.0)) continue;
                for (int it = 0; it < 60; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double f_mid = diff(mid);
                    if ((f_mid < 0.0) == (f_lo < 0.0)) {
                        lo = mid;
                        f_lo = f_mid;
                    } else {
                        hi = mid;
                    }
                }
                out.crossovers.push_back({defs[i].label, defs[j].label, 0.5 * (lo + hi)});
            }
        }
    }
    return out;
}

}  // namespace hsps
