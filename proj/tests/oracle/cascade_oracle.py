"""Reference values for the cascade model by direct numerical integration.

Every quantity is computed from the photon arrival densities with adaptive
quadrature (no closed forms), then printed as C++ constants for
tests/frozen_values.hpp.
"""
import math

from scipy import integrate, optimize


def rates(tau_x, tau_bx):
    return 1.0 / tau_x, 1.0 / tau_bx


def p_bx_before_x_after(t, tau_x, tau_bx):
    gx, gb = rates(tau_x, tau_bx)
    # BX at s <= t, X delay > t - s
    f = lambda s: gb * math.exp(-gb * s) * math.exp(-gx * (t - s))
    return integrate.quad(f, 0.0, t, epsabs=1e-15, epsrel=1e-13)[0]


def tables(qx, qbx, tau_x, tau_bx, alpha, t):
    a, b = alpha * qx, alpha * qbx
    gx, gb = rates(tau_x, tau_bx)
    bx_before = integrate.quad(lambda s: gb * math.exp(-gb * s), 0.0, t, epsabs=1e-15)[0]
    x_before = integrate.quad(lambda s: gx * math.exp(-gx * s), 0.0, t, epsabs=1e-15)[0]
    r1 = a * b * p_bx_before_x_after(t, tau_x, tau_bx)
    r2 = a * b * bx_before - r1
    r3 = a * b * (1.0 - bx_before)
    return [r1, r2, r3, b * (1 - a) * bx_before, b * (1 - a) * (1 - bx_before),
            a * (1 - b) * x_before, a * (1 - b) * (1 - x_before), (1 - a) * (1 - b)]


def timed(qx, qbx, tau_x, tau_bx, alpha, t):
    return tables(qx, qbx, tau_x, tau_bx, alpha, t)[0]


def timed_opt(qx, qbx, tau_x, tau_bx, alpha):
    res = optimize.minimize_scalar(lambda t: -timed(qx, qbx, tau_x, tau_bx, alpha, t),
                                   bounds=(1e-6, 10 * tau_x), method="bounded",
                                   options={"xatol": 1e-10})
    return res.x, -res.fun


def ash(qx, qbx, tau_x, alpha, t_r):
    gx = 1.0 / tau_x
    sep = integrate.quad(lambda s: gx * math.exp(-gx * s), t_r, math.inf)[0]
    return alpha * alpha * qx * qbx * sep


def tgf(qx, qbx, tau_x, tau_bx, alpha, t):
    r = tables(qx, qbx, tau_x, tau_bx, alpha, t)
    eff = r[0] + r[4] + r[6]
    return eff, eff / (eff + r[2])


def tgf_gate(qx, qbx, tau_x, tau_bx, alpha, s):
    t = optimize.brentq(lambda t: tgf(qx, qbx, tau_x, tau_bx, alpha, t)[1] - s,
                        1e-9, 10 * tau_x, xtol=1e-13)
    return t, tgf(qx, qbx, tau_x, tau_bx, alpha, t)[0]


def main():
    out = {}
    tc, eta = timed_opt(1, 1, 1.0, 0.25, 1)
    out["kIdealTcOpt"] = tc
    out["kIdealTimedOpt"] = eta
    r = tables(1, 1, 1.0, 0.25, 1, tc)
    out["kIdealTimedDeterminicity"] = r[0] / (r[0] + r[1] + r[3] + r[5])
    tbx_b = 1.6 * (0.7 / 0.61) / 4
    out["kModelTimedOptAlpha1"] = timed_opt(0.61, 0.7, 1.6, tbx_b, 1)[1]
    out["kModelTimedOpt"] = timed_opt(0.61, 0.7, 1.6, tbx_b, 0.72)[1]
    out["kModelAshAlpha1"] = ash(0.61, 0.7, 1.6, 1, 0)
    out["kModelAsh"] = ash(0.61, 0.7, 1.6, 0.72, 0.17 * 1.6)
    out["kModelAsh265"] = ash(0.61, 0.7, 1.6, 0.72, 0.265)
    out["kIdealTgfGate"], out["kIdealTgfEff"] = tgf_gate(1, 1, 1.0, 0.25, 1, 0.995)
    out["kModelTgfGate"], out["kModelTgfEff"] = tgf_gate(0.61, 0.7, 1.6, tbx_b, 0.72, 0.995)
    out["kModelTgfAlpha1Eff"] = tgf_gate(0.61, 0.7, 1.6, tbx_b, 1, 0.995)[1]
    # Path table at an off-optimum gate with unequal, non-unit parameters.
    for i, v in enumerate(tables(0.37, 0.81, 2.3, 0.41, 0.64, 0.9)):
        out[f"kTableRow{i + 1}"] = v
    for k, v in out.items():
        print(f"inline constexpr double {k} = {float(v)!r};")


if __name__ == "__main__":
    main()
