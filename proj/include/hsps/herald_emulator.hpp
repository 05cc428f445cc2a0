#pragma once

// Offline emulation of TIMED, ASH, TGF and beam-splitter heralding over pulse-grouped
// time tags.
//
// Counting convention: each analysed pulse is weighted by the photon-number correction of
// its detected photon count (1 photon: 1, 2 photons: c2, 3 or more: c3), so that pulses
// partially lost to same-detector collisions are restored on average. Resolving detectors
// use unit weights throughout.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hsps/detector.hpp"
#include "hsps/emitter_model.hpp"
#include "hsps/errors.hpp"
#include "hsps/timetag.hpp"

namespace hsps {

inline constexpr double kDefaultFilterNs = 0.3;

struct HeraldReport {
    Scheme scheme = Scheme::kTimed;
    std::uint64_t n_pulses = 0;
    std::uint64_t n_triggers = 0;
    std::uint64_t n_success = 0;
    double n_success_corrected = 0.0;
    std::uint64_t n_signal_1 = 0;        // successes with exactly one signal photon
    std::uint64_t n_signal_2 = 0;        // successes with two or more signal photons
    double n_signal_1_corrected = 0.0;
    double n_signal_2_corrected = 0.0;
    std::uint64_t n_over3 = 0;           // pulses with more than three photons, counted as three
    double efficiency = 0.0;
    std::optional<double> purity;
    std::optional<double> determinicity;
    double alpha = 1.0;
    double t_f_ns = 0.0;
    std::optional<double> t_c_ns;
    std::optional<double> t_r_ns;
};

/// One emulation setting; the fields not used by `scheme` are ignored.
struct SchemeSettings {
    Scheme scheme = Scheme::kTimed;
    double t_f_ns = kDefaultFilterNs;
    double t_c_ns = 0.0;
    double t_r_ns = 0.0;
};

namespace detail {

inline double photon_weight(std::size_t n, const CorrectionFactors& k) {
    if (n <= 1) return 1.0;
    return n == 2 ? k.c2 : k.c3;
}

class HeraldTally {
  public:
    HeraldTally(Scheme scheme, std::uint64_t n_pulses, double alpha, const DetectorConfig& d)
        : k_(correction_factors(d)) {
        require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0,1]");
        r_.scheme = scheme;
        r_.n_pulses = n_pulses;
        r_.alpha = alpha;
    }

    void trigger(std::size_t n_photons) {
        ++r_.n_triggers;
        trigger_weight_ += photon_weight(n_photons, k_);
        if (n_photons > 3) ++r_.n_over3;
    }

    void success(std::size_t n_photons, std::size_t n_signal) {
        const double w = photon_weight(n_photons, k_);
        ++r_.n_success;
        r_.n_success_corrected += w;
        if (n_signal == 1) {
            ++r_.n_signal_1;
            r_.n_signal_1_corrected += w;
        } else {
            ++r_.n_signal_2;
            r_.n_signal_2_corrected += w;
        }
    }

    HeraldReport finish() {
        if (r_.n_pulses > 0) r_.efficiency = r_.n_success_corrected / static_cast<double>(r_.n_pulses);
        if (r_.n_signal_1_corrected > 0.0) {
            r_.purity = 1.0 - r_.n_signal_2_corrected / (r_.alpha * r_.n_signal_1_corrected);
        }
        if (trigger_weight_ > 0.0) r_.determinicity = r_.n_success_corrected / trigger_weight_;
        return r_;
    }

    HeraldReport& report() { return r_; }

  private:
    CorrectionFactors k_;
    HeraldReport r_;
    double trigger_weight_ = 0.0;
};

/// Events at or after the filter time (events are sorted, so this is a suffix).
inline std::span<const LocalEvent> after_filter(std::span<const LocalEvent> events,
                                                std::uint64_t t_f_ps) {
    auto it = std::lower_bound(events.begin(), events.end(), t_f_ps,
                               [](const LocalEvent& e, std::uint64_t t) { return e.local_time_ps < t; });
    return events.subspan(static_cast<std::size_t>(it - events.begin()));
}

inline std::uint64_t time_ps(double ns, const char* what) {
    require(ns >= 0.0, what);
    return static_cast<std::uint64_t>(ns_to_ps(ns));
}

}  // namespace detail

/// Passive heralding: photons in [t_f, t_c] go to the idler, later photons to the signal.
inline HeraldReport emulate_timed(const PulseGroups& groups, double t_c_ns, double t_f_ns,
                                  double alpha, const DetectorConfig& d) {
    detail::require(t_c_ns > t_f_ns, "TIMED needs t_c > t_f");
    const std::uint64_t t_f = detail::time_ps(t_f_ns, "t_f must be >= 0");
    const std::uint64_t t_c = detail::time_ps(t_c_ns, "t_c must be >= 0");
    detail::HeraldTally tally(Scheme::kTimed, groups.n_pulses(), alpha, d);
    for (const PulseGroup g : groups) {
        const auto kept = detail::after_filter(g.events, t_f);
        std::size_t idler = 0;
        for (const LocalEvent& e : kept) {
            if (e.local_time_ps <= t_c) ++idler;
        }
        if (idler == 0) continue;
        tally.trigger(kept.size());
        const std::size_t signal = kept.size() - idler;
        if (signal > 0) tally.success(kept.size(), signal);
    }
    HeraldReport r = tally.finish();
    r.t_f_ns = t_f_ns;
    r.t_c_ns = t_c_ns;
    return r;
}

/// Active heralding: the first photon after t_f triggers the switch, which routes every
/// photon arriving more than t_r after the trigger to the signal port.
inline HeraldReport emulate_ash(const PulseGroups& groups, double t_r_ns, double t_f_ns,
                                double alpha, const DetectorConfig& d) {
    const std::uint64_t t_f = detail::time_ps(t_f_ns, "t_f must be >= 0");
    const std::uint64_t t_r = detail::time_ps(t_r_ns, "t_r must be >= 0");
    detail::HeraldTally tally(Scheme::kAsh, groups.n_pulses(), alpha, d);
    for (const PulseGroup g : groups) {
        const auto kept = detail::after_filter(g.events, t_f);
        if (kept.empty()) continue;
        tally.trigger(kept.size());
        const std::uint64_t open = kept.front().local_time_ps + t_r;
        std::size_t signal = 0;
        for (const LocalEvent& e : kept.subspan(1)) {
            if (e.local_time_ps > open) ++signal;
        }
        if (signal > 0) tally.success(kept.size(), signal);
    }
    HeraldReport r = tally.finish();
    r.t_f_ns = t_f_ns;
    r.t_r_ns = t_r_ns;
    return r;
}

/// Time-gated filtering: only photons at or after t_f survive. Efficiency counts pulses with
/// exactly one surviving photon; purity is the corrected single/multi-photon ratio.
inline HeraldReport emulate_tgf(const PulseGroups& groups, double t_f_ns, double alpha,
                                const DetectorConfig& d) {
    const std::uint64_t t_f = detail::time_ps(t_f_ns, "t_f must be >= 0");
    detail::require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0,1]");
    HeraldReport r;
    r.scheme = Scheme::kTgf;
    r.n_pulses = groups.n_pulses();
    r.alpha = alpha;
    r.t_f_ns = t_f_ns;
    const CorrectionFactors k = correction_factors(d);
    std::uint64_t n2m = 0;
    std::uint64_t n3m = 0;
    for (const PulseGroup g : groups) {
        const std::size_t n = detail::after_filter(g.events, t_f).size();
        if (n == 0) continue;
        ++r.n_triggers;
        if (n == 1) {
            ++r.n_success;
            ++r.n_signal_1;
        } else {
            ++r.n_signal_2;
            (n == 2 ? n2m : n3m) += 1;
            if (n > 3) ++r.n_over3;
        }
    }
    r.n_success_corrected = static_cast<double>(r.n_success);
    r.n_signal_1_corrected = static_cast<double>(r.n_signal_1);
    r.n_signal_2_corrected = k.c2 * static_cast<double>(n2m) + k.c3 * static_cast<double>(n3m);
    if (r.n_pulses > 0) r.efficiency = static_cast<double>(r.n_success) / static_cast<double>(r.n_pulses);
    if (r.n_signal_1 > 0) {
        const double n1 = static_cast<double>(r.n_signal_1);
        r.purity = n1 / (n1 + k.c2 * static_cast<double>(n2m) / alpha +
                         k.c3 * static_cast<double>(n3m) / (alpha * alpha));
    }
    return r;
}

/// Beam-splitter heralding: the first splitter is the heralding splitter, so channel 1 is the
/// idler and channels 2-3 the signal. No photon-number correction applies.
inline HeraldReport emulate_bs_herald(const PulseGroups& groups, double alpha,
                                      const DetectorConfig& d, double t_f_ns = 0.0) {
    detail::require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0,1]");
    if (d.r1 >= 1.0 || d.r1 <= 0.0) {
        throw DomainError("beam-splitter heralding needs both outputs of the first splitter");
    }
    const std::uint64_t t_f = detail::time_ps(t_f_ns, "t_f must be >= 0");
    bool any_signal_channel = false;
    bool any_event = false;
    HeraldReport r;
    r.scheme = Scheme::kBeamSplitter;
    r.n_pulses = groups.n_pulses();
    r.alpha = alpha;
    r.t_f_ns = t_f_ns;
    for (const PulseGroup g : groups) {
        std::size_t idler = 0;
        std::size_t signal = 0;
        for (const LocalEvent& e : detail::after_filter(g.events, t_f)) {
            any_event = true;
            (e.channel == 1 ? idler : signal) += 1;
        }
        any_signal_channel = any_signal_channel || signal > 0;
        if (idler == 0) continue;
        ++r.n_triggers;
        if (signal == 0) continue;
        ++r.n_success;
        (signal == 1 ? r.n_signal_1 : r.n_signal_2) += 1;
    }
    if (any_event && !any_signal_channel) {
        throw DomainError("beam-splitter heralding needs a multi-channel stream (no signal-channel events found)");
    }
    r.n_success_corrected = static_cast<double>(r.n_success);
    r.n_signal_1_corrected = static_cast<double>(r.n_signal_1);
    r.n_signal_2_corrected = static_cast<double>(r.n_signal_2);
    if (r.n_pulses > 0) r.efficiency = static_cast<double>(r.n_success) / static_cast<double>(r.n_pulses);
    if (r.n_signal_1 > 0) {
        r.purity = 1.0 - r.n_signal_2_corrected / (alpha * r.n_signal_1_corrected);
    }
    if (r.n_triggers > 0) {
        r.determinicity = static_cast<double>(r.n_success) / static_cast<double>(r.n_triggers);
    }
    return r;
}

inline HeraldReport emulate(const PulseGroups& groups, const SchemeSettings& s, double alpha,
                            const DetectorConfig& d) {
    switch (s.scheme) {
        case Scheme::kTimed: return emulate_timed(groups, s.t_c_ns, s.t_f_ns, alpha, d);
        case Scheme::kAsh: return emulate_ash(groups, s.t_r_ns, s.t_f_ns, alpha, d);
        case Scheme::kTgf: return emulate_tgf(groups, s.t_f_ns, alpha, d);
        case Scheme::kBeamSplitter: return emulate_bs_herald(groups, alpha, d, s.t_f_ns);
    }
    throw DomainError("unknown scheme");
}

/// One report per grid point, in grid order.
inline std::vector<HeraldReport> sweep(const PulseGroups& groups, std::span<const SchemeSettings> grid,
                                       double alpha, const DetectorConfig& d) {
    detail::require(!grid.empty(), "sweep grid must not be empty");
    std::vector<HeraldReport> out;
    out.reserve(grid.size());
    for (const SchemeSettings& s : grid) out.push_back(emulate(groups, s, alpha, d));
    return out;
}

/// Which setting a sweep varies.
enum class SweepParameter { kFilter, kCutoff, kResponse };

inline std::vector<SchemeSettings> make_grid(const SchemeSettings& base, SweepParameter what,
                                             std::span<const double> values) {
    std::vector<SchemeSettings> grid;
    grid.reserve(values.size());
    for (const double v : values) {
        SchemeSettings s = base;
        (what == SweepParameter::kFilter ? s.t_f_ns : what == SweepParameter::kCutoff ? s.t_c_ns : s.t_r_ns) = v;
        grid.push_back(s);
    }
    return grid;
}

}  // namespace hsps
