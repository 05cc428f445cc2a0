#pragma once

// Closed-form efficiency, purity and determinicity of a biexciton-exciton
// cascade emitter under time-gated filtering (TGF), passive time-resolved
// heralding (TIMED), active switching heralding (ASH) and beam-splitter
// heralding. All times are in nanoseconds.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "hsps/errors.hpp"

namespace hsps {

enum class Scheme { kTgf, kTimed, kAsh, kBeamSplitter };

inline std::string_view scheme_name(Scheme s) {
    switch (s) {
        case Scheme::kTgf: return "tgf";
        case Scheme::kTimed: return "timed";
        case Scheme::kAsh: return "ash";
        case Scheme::kBeamSplitter: return "bs";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view name) {
    if (name == "tgf") return Scheme::kTgf;
    if (name == "timed") return Scheme::kTimed;
    if (name == "ash") return Scheme::kAsh;
    if (name == "bs" || name == "bs-herald") return Scheme::kBeamSplitter;
    throw ConfigError("unknown scheme '" + std::string(name) + "' (expected tgf|timed|ash|bs)");
}

/// Relative lifetime mismatch below which the X and BX lifetimes are treated as equal and
/// the removable singularities of the cascade formulas are replaced by their limits.
inline constexpr double kEqualLifetimeTolerance = 1e-9;

struct EmitterParams {
    double qy_x = 1.0;
    double qy_bx = 1.0;
    double tau_x_ns = 1.0;
    double tau_bx_ns = 0.25;
    double beta = 4.0;
    double alpha = 1.0;

    void validate() const {
        auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
        detail::require(prob(qy_x), "qy_x must be in [0,1]");
        detail::require(prob(qy_bx), "qy_bx must be in [0,1]");
        detail::require(prob(alpha), "alpha must be in [0,1]");
        detail::require(tau_x_ns > 0.0 && std::isfinite(tau_x_ns), "tau_x_ns must be > 0");
        detail::require(tau_bx_ns > 0.0 && std::isfinite(tau_bx_ns), "tau_bx_ns must be > 0");
        detail::require(beta > 0.0 && std::isfinite(beta), "beta must be > 0");
    }

    /// Biexciton lifetime implied by the yields through QY_BX/QY_X = beta * tau_bx/tau_x.
    static EmitterParams beta_scaled(double qy_x, double qy_bx, double tau_x_ns, double beta,
                                     double alpha) {
        detail::require(qy_x > 0.0, "beta scaling needs qy_x > 0");
        detail::require(qy_bx > 0.0, "beta scaling needs qy_bx > 0");
        EmitterParams p{qy_x, qy_bx, tau_x_ns, tau_x_ns * (qy_bx / qy_x) / beta, beta, alpha};
        p.validate();
        return p;
    }

    /// Biexciton yield implied by the measured lifetimes and beta.
    static EmitterParams from_lifetimes(double qy_x, double tau_x_ns, double tau_bx_ns,
                                        double beta, double alpha) {
        EmitterParams p{qy_x, qy_x * beta * tau_bx_ns / tau_x_ns, tau_x_ns, tau_bx_ns, beta, alpha};
        p.validate();
        return p;
    }

    bool equal_lifetimes() const {
        return std::abs(1.0 - tau_bx_ns / tau_x_ns) < kEqualLifetimeTolerance;
    }

    /// alpha^2 QY_X QY_BX, the probability that both cascade photons are detected.
    double pair_probability() const { return alpha * alpha * qy_x * qy_bx; }
};

/// Per-pulse probability of each emission path relative to a fixed gate T:
///   1: BX <= T, X >= T     2: both <= T     3: both >= T
///   4: BX only, <= T       5: BX only, >= T
///   6: X only, <= T        7: X only, >= T  8: no photon
struct PathProbs {
    std::array<double, 8> p{};

    /// 1-based row access, matching the numbering above.
    double row(int i) const { return p.at(static_cast<std::size_t>(i - 1)); }
    double sum() const {
        double s = 0.0;
        for (double v : p) s += v;
        return s;
    }
};

struct NoiseParams {
    double eta_cn = 0.0;      // correlated noise events per pulse, emitter level (before alpha)
    double tau_cn_ns = 0.3;   // correlated noise decay time
    double eta_un = 0.0;      // uncorrelated noise events per pulse, emitter level

    void validate() const {
        detail::require(eta_cn >= 0.0 && eta_cn <= 1.0, "eta_cn must be in [0,1]");
        detail::require(eta_un >= 0.0 && eta_un <= 1.0, "eta_un must be in [0,1]");
        detail::require(tau_cn_ns > 0.0, "tau_cn_ns must be > 0");
    }
};

/// Efficiency per pulse plus purity and determinicity. An empty purity or
/// determinicity means no signal (or no trigger) events exist at all.
struct SchemeMetrics {
    double efficiency = 0.0;
    std::optional<double> purity;
    std::optional<double> determinicity;
};

struct TgfGate {
    double t_f_ns = 0.0;
    double efficiency = 0.0;
    double purity = 0.0;
};

namespace detail {

inline void require_time(double t, const char* what) {
    require(t >= 0.0 && !std::isnan(t), what);
}

/// (exp(-T/tau_x) - exp(-T/tau_bx)) * tau_x / (tau_x - tau_bx), evaluated without the
/// cancellation at small T or nearly equal lifetimes. Equal lifetimes give (T/tau) exp(-T/tau).
inline double split_kernel(const EmitterParams& p, double t) {
    if (p.equal_lifetimes()) {
        return (t / p.tau_x_ns) * std::exp(-t / p.tau_x_ns);
    }
    const double d = 1.0 / p.tau_bx_ns - 1.0 / p.tau_x_ns;
    return std::exp(-t / p.tau_x_ns) * -std::expm1(-t * d) / (p.tau_bx_ns * d);
}

}  // namespace detail

/// QY_BX / QY_X implied by the lifetimes: beta * tau_bx / tau_x.
inline double qy_ratio(double tau_x_ns, double tau_bx_ns, double beta) {
    detail::require(tau_x_ns > 0.0 && tau_bx_ns > 0.0, "lifetimes must be > 0");
    detail::require(beta > 0.0, "beta must be > 0");
    return beta * tau_bx_ns / tau_x_ns;
}

inline PathProbs path_probabilities(const EmitterParams& p, double gate_ns) {
    p.validate();
    detail::require_time(gate_ns, "gate must be >= 0");
    const double a = p.alpha * p.qy_x;
    const double b = p.alpha * p.qy_bx;
    const double pair = a * b;
    const double bx_before = -std::expm1(-gate_ns / p.tau_bx_ns);
    const double bx_after = std::exp(-gate_ns / p.tau_bx_ns);
    const double x_before = -std::expm1(-gate_ns / p.tau_x_ns);
    const double x_after = std::exp(-gate_ns / p.tau_x_ns);

    PathProbs out;
    out.p[0] = pair * detail::split_kernel(p, gate_ns);
    // Rows 1 and 2 together are "BX before the gate"; the max only absorbs roundoff at tiny gates.
    out.p[1] = std::max(0.0, pair * bx_before - out.p[0]);
    out.p[2] = pair * bx_after;
    out.p[3] = b * (1.0 - a) * bx_before;
    out.p[4] = b * (1.0 - a) * bx_after;
    out.p[5] = a * (1.0 - b) * x_before;
    out.p[6] = a * (1.0 - b) * x_after;
    out.p[7] = (1.0 - a) * (1.0 - b);
    return out;
}

/// Standalone emitter: P1 = a + b - 2ab, P2 = ab with a, b the detected yields.
inline SchemeMetrics standalone_metrics(const EmitterParams& p) {
    p.validate();
    const double a = p.alpha * p.qy_x;
    const double b = p.alpha * p.qy_bx;
    const double p1 = a + b - 2.0 * a * b;
    const double p2 = a * b;
    SchemeMetrics m;
    m.efficiency = p1;
    if (p1 + p2 > 0.0) m.purity = p1 / (p1 + p2);
    return m;
}

/// TIMED cutoff maximising the passive heralding efficiency:
/// tau_x * ln(r) / (r - 1) with r = tau_x / tau_bx, tending to tau_x as r -> 1.
inline double tc_opt(double tau_x_ns, double tau_bx_ns) {
    detail::require(tau_x_ns > 0.0 && tau_bx_ns > 0.0, "lifetimes must be > 0");
    const double rm1 = tau_x_ns / tau_bx_ns - 1.0;
    if (std::abs(1.0 - tau_bx_ns / tau_x_ns) < kEqualLifetimeTolerance) return tau_x_ns;
    return tau_x_ns * std::log1p(rm1) / rm1;
}

/// Passive heralding efficiency: the BX photon falls before the cutoff and the X photon after.
inline double eta_timed(const EmitterParams& p, double t_c_ns) {
    p.validate();
    detail::require_time(t_c_ns, "t_c must be >= 0");
    return p.pair_probability() * detail::split_kernel(p, t_c_ns);
}

/// Active heralding efficiency for a switch response time t_r.
inline double eta_ash(const EmitterParams& p, double t_r_ns) {
    p.validate();
    detail::require_time(t_r_ns, "t_r must be >= 0");
    return p.pair_probability() * std::exp(-t_r_ns / p.tau_x_ns);
}

/// 50:50 beam-splitter heralding: half of the detected pairs are split idler/signal.
inline double bs_herald_efficiency(const EmitterParams& p) {
    p.validate();
    return 0.5 * p.pair_probability();
}

namespace detail {

// TGF single-photon and two-photon terms after the gate, multiplied by exp(t/tau_slow)
// so that the ratio stays finite for arbitrarily late gates.
struct TgfTerms {
    double single = 0.0;  // rows 1 + 5 + 7
    double pair = 0.0;    // row 3
};

inline TgfTerms tgf_terms_scaled(const EmitterParams& p, double t) {
    const double a = p.alpha * p.qy_x;
    const double b = p.alpha * p.qy_bx;
    const double tau_slow = std::max(p.tau_x_ns, p.tau_bx_ns);
    const double ex = std::exp(-t / p.tau_x_ns + t / tau_slow);
    const double eb = std::exp(-t / p.tau_bx_ns + t / tau_slow);
    double kernel = 0.0;
    if (p.equal_lifetimes()) {
        kernel = t / p.tau_x_ns;
    } else {
        const double d = 1.0 / p.tau_bx_ns - 1.0 / p.tau_x_ns;
        kernel = (p.tau_x_ns >= p.tau_bx_ns) ? -std::expm1(-t * d) / (p.tau_bx_ns * d)
                                             : std::expm1(t * d) / (p.tau_bx_ns * d);
    }
    TgfTerms out;
    out.single = a * b * kernel + b * (1.0 - a) * eb + a * (1.0 - b) * ex;
    out.pair = a * b * eb;
    return out;
}

inline std::optional<double> tgf_purity(const EmitterParams& p, double t) {
    const TgfTerms s = tgf_terms_scaled(p, t);
    if (s.single + s.pair <= 0.0) return std::nullopt;
    return s.single / (s.single + s.pair);
}

}  // namespace detail

/// Time-gated filtering: everything before t_f is dumped; efficiency is the probability of
/// exactly one photon after the gate, purity that normalised by one-or-two photons after it.
inline SchemeMetrics tgf_metrics(const EmitterParams& p, double t_f_ns) {
    p.validate();
    detail::require_time(t_f_ns, "t_f must be >= 0");
    const PathProbs rows = path_probabilities(p, t_f_ns);
    SchemeMetrics m;
    m.efficiency = rows.row(1) + rows.row(5) + rows.row(7);
    m.purity = detail::tgf_purity(p, t_f_ns);
    return m;
}

/// Smallest TGF gate reaching the target purity, by bisection to 1e-6 tau_x.
inline TgfGate solve_tgf_gate(const EmitterParams& p, double s_target) {
    p.validate();
    detail::require(s_target >= 0.0 && s_target <= 1.0, "target purity must be in [0,1]");
    auto purity = [&](double t) { return detail::tgf_purity(p, t).value_or(0.0); };
    auto result = [&](double t) {
        const SchemeMetrics m = tgf_metrics(p, t);
        return TgfGate{t, m.efficiency, m.purity.value_or(0.0)};
    };

    if (!detail::tgf_purity(p, 0.0)) {
        throw NoSolutionError("TGF gate: emitter produces no photons");
    }
    if (purity(0.0) >= s_target) return result(0.0);

    const double tau_slow = std::max(p.tau_x_ns, p.tau_bx_ns);
    const double t_max = 1e3 * tau_slow;
    if (purity(t_max) < s_target) {
        throw NoSolutionError("TGF gate: purity " + std::to_string(s_target) +
                              " is not reachable (late-gate limit " +
                              std::to_string(purity(t_max)) + ")");
    }
    double lo = 0.0;
    double hi = p.tau_x_ns;
    while (purity(hi) < s_target) {
        lo = hi;
        hi *= 2.0;
    }
    const double resolution = 1e-6 * p.tau_x_ns;
    while (hi - lo > resolution) {
        const double mid = 0.5 * (lo + hi);
        (purity(mid) >= s_target ? hi : lo) = mid;
    }
    return result(hi);
}

/// Fraction of trigger events that are true heralds. TIMED triggers are any photon before the
/// cutoff; ASH triggers are any detected photon. Empty when no triggers can occur.
inline std::optional<double> determinicity(const EmitterParams& p, Scheme scheme, double gate_ns) {
    p.validate();
    detail::require_time(gate_ns, "gate must be >= 0");
    double success = 0.0;
    double triggers = 0.0;
    if (scheme == Scheme::kTimed) {
        const PathProbs rows = path_probabilities(p, gate_ns);
        success = rows.row(1);
        triggers = rows.row(1) + rows.row(2) + rows.row(4) + rows.row(6);
    } else if (scheme == Scheme::kAsh) {
        const double a = p.alpha * p.qy_x;
        const double b = p.alpha * p.qy_bx;
        success = eta_ash(p, gate_ns);
        // Two photons (separated or not), X only, BX only.
        triggers = a * b + a * (1.0 - b) + b * (1.0 - a);
    } else {
        throw DomainError("determinicity is defined for TIMED and ASH only");
    }
    if (triggers <= 0.0) return std::nullopt;
    return success / triggers;
}

/// Heralded-scheme purity limited by noise coincidences:
/// S = 1 - ab*eta / (ab + eta*(a + b)) with a, b the emitter yields and eta the noise
/// probability per pulse (correlated + uncorrelated, or uncorrelated only).
inline double noise_adjusted_purity(const EmitterParams& p, const NoiseParams& n,
                                    bool include_correlated) {
    p.validate();
    n.validate();
    const double eta = include_correlated ? n.eta_cn + n.eta_un : n.eta_un;
    const double ab = p.qy_x * p.qy_bx;
    const double denom = ab + eta * (p.qy_x + p.qy_bx);
    if (denom <= 0.0) return 1.0;
    return 1.0 - ab * eta / denom;
}

}  // namespace hsps
