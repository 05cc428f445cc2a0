// Analytic and emulated efficiencies of the four schemes for one emitter.
//
//   compare_schemes [preset] [pulses]

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>

#include "hsps/hsps.hpp"

int main(int argc, char** argv) {
    using namespace hsps;
    const std::string name = argc > 1 ? argv[1] : "model-system";
    SimConfig cfg = preset(name);
    cfg.n_pulses = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1000000;
    cfg.detectors = DetectorConfig::ideal();

    const EmitterParams& p = cfg.emitter;
    const double tc = tc_opt(p.tau_x_ns, p.tau_bx_ns);
    const double tr = response_time(HardwareConfig{}) * 1e-3;
    const TgfGate gate = solve_tgf_gate(p, kDefaultPurityTarget);

    const PulseGroups groups = localize(simulate_stream(cfg));
    const SchemeSettings settings[] = {
        {Scheme::kTimed, 0.0, tc, 0.0},
        {Scheme::kAsh, 0.0, 0.0, tr},
        {Scheme::kTgf, gate.t_f_ns, 0.0, 0.0},
    };
    const double analytic[] = {eta_timed(p, tc), eta_ash(p, tr), gate.efficiency};

    std::cout << std::setprecision(5) << "scheme  analytic  emulated\n";
    for (int i = 0; i < 3; ++i) {
        const HeraldReport r = emulate(groups, settings[i], p.alpha, cfg.detectors);
        std::cout << std::left << std::setw(8) << scheme_name(r.scheme) << std::setw(10) << analytic[i]
                  << r.efficiency << '\n';
    }
    return 0;
}
