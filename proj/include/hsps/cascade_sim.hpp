#pragma once

// Seeded Monte Carlo generator of time-tagged detector events for a pulsed
// biexciton-exciton cascade with correlated and uncorrelated noise, routed through a
// two-splitter detector tree.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hsps/detector.hpp"
#include "hsps/emitter_model.hpp"
#include "hsps/errors.hpp"
#include "hsps/rng.hpp"
#include "hsps/timetag.hpp"

namespace hsps {

/// How the X photon time is drawn when the BX photon is not registered.
///   kTableModel:  X delay measured from the pulse, so the X-only emission paths decay with
///                 tau_x alone, as in the eight-path table of the analytic model.
///   kConditioned: X always follows the (unregistered) BX decay, giving a hypoexponential
///                 X-only arrival distribution.
/// When both photons are registered the X always follows the BX decay.
enum class CascadeTiming { kTableModel, kConditioned };

struct SimConfig {
    EmitterParams emitter;
    NoiseParams noise;
    DetectorConfig detectors;
    std::uint64_t n_pulses = 1;
    double rep_period_ns = 500.0;
    std::uint64_t seed = 1;
    CascadeTiming timing = CascadeTiming::kTableModel;

    std::uint64_t rep_period_ps() const { return static_cast<std::uint64_t>(ns_to_ps(rep_period_ns)); }

    void validate() const {
        try {
            emitter.validate();
            noise.validate();
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
        detectors.validate();
        if (n_pulses < 1) throw ConfigError("n_pulses must be >= 1");
        if (!(rep_period_ns > 0.0) || rep_period_ps() == 0) {
            throw ConfigError("rep_period_ns must be > 0 (and at least 1 ps)");
        }
        if (noise.eta_cn * emitter.alpha > 1.0 || noise.eta_un * emitter.alpha > 1.0) {
            throw ConfigError("detected noise probability exceeds 1");
        }
    }

    std::vector<std::string> warnings() const {
        std::vector<std::string> out;
        if (rep_period_ns < 5.0 * emitter.tau_x_ns) {
            out.push_back("repetition period is shorter than 5 tau_x; late photons spill into the next pulse");
        }
        return out;
    }
};

/// Ground truth of one simulated pulse, for validating analyses against the generator.
struct PulseTruth {
    double bx_ns = 0.0;
    double x_ns = 0.0;
    bool bx_registered = false;
    bool x_registered = false;
    std::uint8_t n_noise = 0;
    std::uint8_t n_detected = 0;  // photons surviving the detector tree
};

struct DetectedPhoton {
    std::uint8_t channel = 0;
    double time_ns = 0.0;
};

/// Routes photons (sorted by arrival) through the splitter tree, drops photons that hit a
/// detector still dead from an earlier count, then adds timing jitter.
inline std::vector<DetectedPhoton> apply_detector_tree(std::span<const double> arrivals_ns,
                                                       const DetectorConfig& d, PulseRng& rng) {
    std::vector<DetectedPhoton> out;
    out.reserve(arrivals_ns.size());
    std::array<double, kMaxChannel + 1> last_hit{};
    std::array<bool, kMaxChannel + 1> hit{};
    for (const double t : arrivals_ns) {
        std::uint8_t channel = 3;
        if (rng.bernoulli(d.r1)) {
            channel = 1;
        } else if (rng.bernoulli(d.r2)) {
            channel = 2;
        }
        if (hit[channel]) {
            const bool dead = !d.dead_time_ns || (t - last_hit[channel]) < *d.dead_time_ns;
            if (dead) continue;
        }
        hit[channel] = true;
        last_hit[channel] = t;
        out.push_back({channel, t});
    }
    if (d.jitter_sigma_ps > 0.0) {
        for (DetectedPhoton& p : out) {
            p.time_ns = std::max(0.0, p.time_ns + rng.normal(d.jitter_sigma_ps) * 1e-3);
        }
        std::sort(out.begin(), out.end(),
                  [](const DetectedPhoton& a, const DetectedPhoton& b) { return a.time_ns < b.time_ns; });
    }
    return out;
}

/// Worker count from HSPS_THREADS, else the hardware concurrency.
inline unsigned worker_threads() {
    if (const char* env = std::getenv("HSPS_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

inline void simulate_range(const SimConfig& cfg, std::uint64_t first, std::uint64_t last,
                           std::vector<TagRecord>& records, PulseTruth* truth) {
    const EmitterParams& e = cfg.emitter;
    const double p_bx = e.alpha * e.qy_bx;
    const double p_x = e.alpha * e.qy_x;
    const double p_cn = e.alpha * cfg.noise.eta_cn;
    const double p_un = e.alpha * cfg.noise.eta_un;
    const std::uint64_t period_ps = cfg.rep_period_ps();

    std::vector<double> arrivals;
    for (std::uint64_t pulse = first; pulse < last; ++pulse) {
        PulseRng rng(cfg.seed, pulse);
        arrivals.clear();
        const double t_bx = rng.exponential(e.tau_bx_ns);
        const double x_delay = rng.exponential(e.tau_x_ns);
        const bool bx_on = rng.bernoulli(p_bx);
        const bool x_on = rng.bernoulli(p_x);
        const bool cn_on = rng.bernoulli(p_cn);
        const double t_cn = rng.exponential(cfg.noise.tau_cn_ns);
        const bool un_on = rng.bernoulli(p_un);
        const double t_un = rng.uniform() * cfg.rep_period_ns;

        const bool x_follows_bx = bx_on || cfg.timing == CascadeTiming::kConditioned;
        const double t_x = x_follows_bx ? t_bx + x_delay : x_delay;
        if (bx_on) arrivals.push_back(t_bx);
        if (x_on) arrivals.push_back(t_x);
        if (cn_on) arrivals.push_back(t_cn);
        if (un_on) arrivals.push_back(t_un);
        std::sort(arrivals.begin(), arrivals.end());

        const std::vector<DetectedPhoton> detected = apply_detector_tree(arrivals, cfg.detectors, rng);
        const std::uint64_t t0 = pulse * period_ps;
        records.push_back({kSyncChannel, t0});
        for (const DetectedPhoton& p : detected) {
            records.push_back({p.channel, t0 + static_cast<std::uint64_t>(ns_to_ps(p.time_ns))});
        }
        if (truth) {
            truth[pulse - first] = PulseTruth{t_bx,
                                              t_x,
                                              bx_on,
                                              x_on,
                                              static_cast<std::uint8_t>(int{cn_on} + int{un_on}),
                                              static_cast<std::uint8_t>(detected.size())};
        }
    }
}

}  // namespace detail

/// Simulates `cfg.n_pulses` excitation pulses. Pulses are generated from independent
/// substreams, so the output depends only on the configuration and seed. When `truth` is
/// given it receives one entry per pulse.
inline EventStream simulate_stream(const SimConfig& cfg, std::vector<PulseTruth>* truth = nullptr) {
    cfg.validate();
    if (truth) truth->assign(cfg.n_pulses, PulseTruth{});

    const unsigned n_threads =
        static_cast<unsigned>(std::min<std::uint64_t>(worker_threads(), cfg.n_pulses));
    std::vector<std::vector<TagRecord>> parts(n_threads);
    const std::uint64_t chunk = (cfg.n_pulses + n_threads - 1) / n_threads;
    auto run = [&](unsigned k) {
        const std::uint64_t first = std::min(cfg.n_pulses, k * chunk);
        const std::uint64_t last = std::min(cfg.n_pulses, first + chunk);
        parts[k].reserve(static_cast<std::size_t>((last - first) * 2));
        detail::simulate_range(cfg, first, last, parts[k], truth ? truth->data() + first : nullptr);
    };
    if (n_threads == 1) {
        run(0);
    } else {
        std::vector<std::jthread> workers;
        for (unsigned k = 0; k < n_threads; ++k) workers.emplace_back(run, k);
    }

    EventStream stream;
    stream.rep_period_ps = cfg.rep_period_ps();
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    stream.records.reserve(total);
    for (auto& p : parts) {
        stream.records.insert(stream.records.end(), p.begin(), p.end());
        std::vector<TagRecord>().swap(p);
    }
    // Photons arriving after the next sync (long tails, jitter) break the per-pulse order.
    if (!std::is_sorted(stream.records.begin(), stream.records.end(), tag_before)) {
        std::sort(stream.records.begin(), stream.records.end(), tag_before);
    }
    return stream;
}

}  // namespace hsps
