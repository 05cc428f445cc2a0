#pragma once

// Lifetime fitting, quantum-yield derivation and noise-rate estimation from grouped
// time tags.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hsps/detector.hpp"
#include "hsps/emitter_model.hpp"
#include "hsps/errors.hpp"
#include "hsps/timetag.hpp"

namespace hsps {

struct ExpComponent {
    double amplitude = 0.0;  // counts per bin at t = 0
    double lifetime_ns = 0.0;
    double amplitude_sigma = 0.0;
    double lifetime_sigma = 0.0;
};

struct FitResult {
    std::vector<ExpComponent> components;  // ascending lifetime
    double baseline = 0.0;
    double baseline_sigma = 0.0;
    double residual_norm = 0.0;  // weighted chi-square
    std::size_t dof = 0;
    std::size_t iterations = 0;
    /// Variances in the order a1, tau1, a2, tau2, ..., baseline.
    std::vector<double> covariance_diagonal;
    std::vector<std::string> warnings;

    double model(double t_ns) const {
        double v = baseline;
        for (const ExpComponent& c : components) v += c.amplitude * std::exp(-t_ns / c.lifetime_ns);
        return v;
    }
};

/// Thrown when the nonlinear search does not converge; carries the best parameters found.
class FitError : public EstimationError {
  public:
    FitError(const std::string& what, FitResult best) : EstimationError(what), best_(std::move(best)) {}
    const FitResult& best() const { return best_; }

  private:
    FitResult best_;
};

struct FitOptions {
    /// Bins whose centres fall outside [t_start, t_end] are ignored.
    double t_start_ns = 0.0;
    double t_end_ns = std::numeric_limits<double>::infinity();
    std::size_t max_iterations = 500;
    double tolerance = 1e-8;
    /// Log-spaced lifetime seeds per component; combinations of these seed the search.
    std::size_t n_seeds = 8;
    /// Seeds refined by the full search, chosen by lowest initial residual.
    std::size_t n_refine = 6;
};

namespace detail {

struct FitProblem {
    Eigen::VectorXd t;     // bin centres, ns
    Eigen::VectorXd y;     // counts
    Eigen::VectorXd sw;    // sqrt of Poisson weights, 1/max(y,1) then 1/model
    Eigen::VectorXd swy;   // sw .* y
};

struct Projection {
    Eigen::VectorXd coef;      // amplitudes then baseline
    Eigen::VectorXd residual;  // weighted
    double cost = 0.0;
};

/// Weighted non-negative least squares for at most a handful of columns: every active set is
/// solved exactly and the best feasible one kept.
inline Projection project(const FitProblem& fp, const Eigen::VectorXd& log_tau) {
    const Eigen::Index n = fp.t.size();
    const Eigen::Index k = log_tau.size();
    Eigen::MatrixXd phi(n, k + 1);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double rate = std::exp(-log_tau(j));
        phi.col(j) = (-fp.t.array() * rate).exp() * fp.sw.array();
    }
    phi.col(k) = fp.sw;
    const Eigen::MatrixXd gram = phi.transpose() * phi;
    const Eigen::VectorXd rhs = phi.transpose() * fp.swy;
    const double yy = fp.swy.squaredNorm();

    const int m = static_cast<int>(k + 1);
    double best_cost = yy;
    Eigen::VectorXd best = Eigen::VectorXd::Zero(m);
    for (int mask = 1; mask < (1 << m); ++mask) {
        std::vector<int> idx;
        for (int j = 0; j < m; ++j) {
            if (mask & (1 << j)) idx.push_back(j);
        }
        const int s = static_cast<int>(idx.size());
        Eigen::MatrixXd g(s, s);
        Eigen::VectorXd b(s);
        for (int i = 0; i < s; ++i) {
            b(i) = rhs(idx[i]);
            for (int j = 0; j < s; ++j) g(i, j) = gram(idx[i], idx[j]);
        }
        const Eigen::VectorXd c = g.completeOrthogonalDecomposition().solve(b);
        if ((c.array() < 0.0).any() || !c.allFinite()) continue;
        const double cost = yy - 2.0 * c.dot(b) + c.dot(g * c);
        if (cost < best_cost) {
            best_cost = cost;
            best.setZero();
            for (int i = 0; i < s; ++i) best(idx[i]) = c(i);
        }
    }
    Projection p;
    p.coef = best;
    p.residual = fp.swy - phi * best;
    p.cost = p.residual.squaredNorm();
    return p;
}

struct SearchResult {
    Eigen::VectorXd log_tau;
    Projection proj;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Levenberg-Marquardt over log lifetimes on the projected residual.
inline SearchResult search(const FitProblem& fp, Eigen::VectorXd theta, double lo, double hi,
                           const FitOptions& opt) {
    const Eigen::Index k = theta.size();
    auto clamp = [&](Eigen::VectorXd v) {
        for (Eigen::Index j = 0; j < k; ++j) v(j) = std::clamp(v(j), lo, hi);
        return v;
    };
    theta = clamp(theta);
    Projection cur = project(fp, theta);
    double lambda = 1e-3;
    SearchResult out;
    for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
        out.iterations = it;
        Eigen::MatrixXd jac(cur.residual.size(), k);
        for (Eigen::Index j = 0; j < k; ++j) {
            Eigen::VectorXd shifted = theta;
            const double h = 1e-6 * std::max(1.0, std::abs(theta(j)));
            shifted(j) += h;
            jac.col(j) = (project(fp, shifted).residual - cur.residual) / h;
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * cur.residual;
        bool improved = false;
        while (lambda < 1e12) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index j = 0; j < k; ++j) a(j, j) += lambda * std::max(jtj(j, j), 1e-12);
            const Eigen::VectorXd step = a.ldlt().solve(-grad);
            const Eigen::VectorXd trial = clamp(theta + step);
            const Projection next = project(fp, trial);
            if (step.allFinite() && next.cost < cur.cost) {
                const double change = (trial - theta).cwiseAbs().maxCoeff();
                theta = trial;
                cur = next;
                lambda = std::max(lambda / 3.0, 1e-12);
                improved = true;
                if (change < opt.tolerance) {
                    out.converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        // No descent direction left: the search sits on a minimum to working precision.
        if (!improved) out.converged = true;
        if (out.converged) break;
    }
    out.log_tau = theta;
    out.proj = cur;
    return out;
}

inline void combinations(std::size_t n, std::size_t k, std::size_t start, std::vector<std::size_t>& cur,
                         std::vector<std::vector<std::size_t>>& out) {
    if (cur.size() == k) {
        out.push_back(cur);
        return;
    }
    for (std::size_t i = start; i < n; ++i) {
        cur.push_back(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop_back();
    }
}

}  // namespace detail

/// Weighted least-squares fit of baseline + sum_i a_i exp(-t/tau_i) to a lifetime histogram.
/// Lifetimes are searched on a log scale from several starting points with Poisson weights
/// 1/max(count,1); the best start is then refined with weights 1/model until the weights settle,
/// which makes the result the Poisson maximum-likelihood fit. Amplitudes and baseline are solved
/// exactly (non-negative) at each step.
inline FitResult fit_exponentials(const Histogram& h, int k, const FitOptions& opt = {}) {
    detail::require(k >= 1 && k <= 3, "number of exponential components must be 1, 2 or 3");
    std::vector<double> t;
    std::vector<double> y;
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        const double c = h.bin_center_ns(i);
        if (c < opt.t_start_ns || c > opt.t_end_ns) continue;
        t.push_back(c);
        y.push_back(static_cast<double>(h.counts[i]));
        if (h.counts[i] > 0) ++nonzero;
    }
    if (nonzero < static_cast<std::size_t>(4 * k + 1)) {
        throw DomainError("histogram has too few nonzero bins for a " + std::to_string(k) +
                          "-component fit");
    }
    const auto n = static_cast<Eigen::Index>(t.size());
    detail::FitProblem fp;
    fp.t = Eigen::Map<const Eigen::VectorXd>(t.data(), n);
    fp.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    fp.sw = fp.y.array().max(1.0).rsqrt();
    fp.swy = fp.sw.cwiseProduct(fp.y);

    const double width = static_cast<double>(h.bin_width_ps) * 1e-3;
    const double span = std::max(t.back() - t.front(), width);
    // A lifetime longer than the fitted window cannot be told apart from the baseline.
    const double lo = std::log(width / 10.0);
    const double hi = std::log(span);

    std::vector<double> seeds(opt.n_seeds);
    const double s_lo = std::log(width);
    const double s_hi = std::log(span);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        seeds[i] = s_lo + (s_hi - s_lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(seeds.size());
    }
    std::vector<std::vector<std::size_t>> combos;
    std::vector<std::size_t> scratch;
    detail::combinations(seeds.size(), static_cast<std::size_t>(k), 0, scratch, combos);
    std::vector<std::pair<double, Eigen::VectorXd>> starts;
    for (const auto& c : combos) {
        Eigen::VectorXd theta(k);
        for (int j = 0; j < k; ++j) theta(j) = seeds[c[static_cast<std::size_t>(j)]];
        starts.emplace_back(detail::project(fp, theta).cost, theta);
    }
    std::sort(starts.begin(), starts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    starts.resize(std::min(starts.size(), std::max<std::size_t>(1, opt.n_refine)));

    std::optional<detail::SearchResult> best;
    for (const auto& s : starts) {
        detail::SearchResult r = detail::search(fp, s.second, lo, hi, opt);
        if (!best || r.proj.cost < best->proj.cost) best = std::move(r);
    }

    // Data-based weights bias the curve low by about one count per bin; the fixed point of
    // model-based reweighting solves the Poisson likelihood equations instead.
    std::size_t iterations = best->iterations;
    for (int pass = 0; pass < 20 && best->converged; ++pass) {
        Eigen::ArrayXd mu = Eigen::ArrayXd::Constant(n, best->proj.coef(k));
        for (int j = 0; j < k; ++j) mu += best->proj.coef(j) * (-fp.t.array() / std::exp(best->log_tau(j))).exp();
        fp.sw = mu.max(0.1).rsqrt();
        fp.swy = fp.sw.cwiseProduct(fp.y);
        detail::SearchResult r = detail::search(fp, best->log_tau, lo, hi, opt);
        iterations += r.iterations;
        const double tau_change = (r.log_tau - best->log_tau).cwiseAbs().maxCoeff();
        const double scale_coef = std::max(1.0, best->proj.coef.cwiseAbs().maxCoeff());
        const double coef_change = (r.proj.coef - best->proj.coef).cwiseAbs().maxCoeff() / scale_coef;
        best = std::move(r);
        if (tau_change < 1e-7 && coef_change < 1e-9) break;
    }

    FitResult fit;
    fit.iterations = iterations;
    fit.residual_norm = best->proj.cost;
    const std::size_t n_par = static_cast<std::size_t>(2 * k + 1);
    fit.dof = t.size() > n_par ? t.size() - n_par : 0;
    std::vector<std::pair<double, double>> comps;  // (lifetime, amplitude)
    for (int j = 0; j < k; ++j) comps.emplace_back(std::exp(best->log_tau(j)), best->proj.coef(j));
    fit.baseline = best->proj.coef(k);

    // Uncertainties from the full (unprojected) weighted Jacobian, scaled by the reduced chi-square.
    Eigen::MatrixXd jac(n, static_cast<Eigen::Index>(n_par));
    for (int j = 0; j < k; ++j) {
        const double tau = comps[static_cast<std::size_t>(j)].first;
        const double amp = comps[static_cast<std::size_t>(j)].second;
        const Eigen::ArrayXd e = (-fp.t.array() / tau).exp();
        jac.col(2 * j) = e * fp.sw.array();
        jac.col(2 * j + 1) = amp * fp.t.array() / (tau * tau) * e * fp.sw.array();
    }
    jac.col(2 * k) = fp.sw;
    const double scale = fit.dof > 0 ? fit.residual_norm / static_cast<double>(fit.dof) : 1.0;
    const Eigen::MatrixXd cov =
        (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse() * scale;
    fit.covariance_diagonal.resize(n_par);
    for (std::size_t i = 0; i < n_par; ++i) {
        fit.covariance_diagonal[i] = std::max(0.0, cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
    }

    std::vector<int> order(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) order[static_cast<std::size_t>(j)] = j;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return comps[static_cast<std::size_t>(a)].first < comps[static_cast<std::size_t>(b)].first;
    });
    std::vector<double> sorted_var;
    for (const int j : order) {
        const auto ju = static_cast<std::size_t>(j);
        ExpComponent c;
        c.lifetime_ns = comps[ju].first;
        c.amplitude = comps[ju].second;
        c.amplitude_sigma = std::sqrt(fit.covariance_diagonal[2 * ju]);
        c.lifetime_sigma = std::sqrt(fit.covariance_diagonal[2 * ju + 1]);
        sorted_var.push_back(fit.covariance_diagonal[2 * ju]);
        sorted_var.push_back(fit.covariance_diagonal[2 * ju + 1]);
        fit.components.push_back(c);
    }
    sorted_var.push_back(fit.covariance_diagonal.back());
    fit.covariance_diagonal = std::move(sorted_var);
    fit.baseline_sigma = std::sqrt(fit.covariance_diagonal.back());

    for (std::size_t j = 1; j < fit.components.size(); ++j) {
        const double a = fit.components[j - 1].lifetime_ns;
        const double b = fit.components[j].lifetime_ns;
        if (b - a < 0.05 * b) {
            fit.warnings.push_back("degenerate fit: lifetimes " + std::to_string(a) + " and " +
                                   std::to_string(b) + " ns are within 5%");
        }
    }
    for (const ExpComponent& c : fit.components) {
        if (c.amplitude == 0.0) {
            fit.warnings.push_back("component with lifetime " + std::to_string(c.lifetime_ns) +
                                   " ns has zero amplitude");
        }
    }
    if (!best->converged) {
        throw FitError("lifetime fit did not converge within " + std::to_string(opt.max_iterations) +
                           " iterations",
                       fit);
    }
    return fit;
}

/// Probability of detecting at least one photon per pulse under the calibration model
/// alpha q + alpha rho q - 2 alpha^2 rho q^2 used to split the yields.
inline double p1_model(double alpha, double qy_x, double rho) {
    return alpha * qy_x * (1.0 + rho) - 2.0 * alpha * alpha * rho * qy_x * qy_x;
}

/// Yields from the yield ratio and the measured single-detection probability.
inline std::pair<double, double> solve_yields(double alpha, double rho, double p1_measured) {
    detail::require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0,1]");
    detail::require(rho >= 0.0 && std::isfinite(rho), "yield ratio must be >= 0");
    detail::require(p1_measured > 0.0 && p1_measured < 1.0, "p1_measured must be in (0,1)");
    const double b = alpha * (1.0 + rho);
    const double disc = b * b - 8.0 * alpha * alpha * rho * p1_measured;
    if (disc < 0.0) {
        throw EstimationError("inconsistent calibration: no real yield reproduces the measured detection probability");
    }
    // Smaller root, written to avoid cancellation.
    const double q = 2.0 * p1_measured / (b + std::sqrt(disc));
    if (!(q > 0.0 && q <= 1.0) || rho * q > 1.0) {
        throw EstimationError("inconsistent calibration: derived quantum yield outside (0,1]");
    }
    return {q, rho * q};
}

/// Assigns fitted components to states (noise, BX, X) by lifetime and derives both yields.
/// Components at or below `noise_ceiling_ns` are treated as noise; with three or more
/// components the shortest is always noise.
inline EmitterParams derive_emitter_params(const FitResult& fit, double alpha, double beta,
                                           double p1_measured, double noise_ceiling_ns = 0.45) {
    detail::require(beta > 0.0, "beta must be > 0");
    detail::require(fit.components.size() >= 2, "yield derivation needs at least two fitted components");
    std::vector<ExpComponent> comps = fit.components;
    std::sort(comps.begin(), comps.end(),
              [](const ExpComponent& a, const ExpComponent& b) { return a.lifetime_ns < b.lifetime_ns; });
    if (comps.size() >= 3) comps.erase(comps.begin());
    while (!comps.empty() && comps.front().lifetime_ns <= noise_ceiling_ns) comps.erase(comps.begin());
    if (comps.size() < 2) {
        throw EstimationError("fit has fewer than two emitter components above the noise-lifetime ceiling");
    }
    const double tau_bx = comps.front().lifetime_ns;
    const double tau_x = comps.back().lifetime_ns;
    const double rho = beta * tau_bx / tau_x;
    const auto [qx, qbx] = solve_yields(alpha, rho, p1_measured);
    EmitterParams p{qx, qbx, tau_x, tau_bx, beta, alpha};
    p.validate();
    return p;
}

/// Fraction of pulses with at least one photon at or after the filter time.
inline double measure_p1(const PulseGroups& groups, double t_f_ns = 0.3) {
    detail::require(groups.n_pulses() > 0, "measure_p1 needs at least one pulse");
    const PhotonCounts c = photon_counts(groups, t_f_ns);
    return static_cast<double>(c.n1 + c.n2m + c.n3m) / static_cast<double>(groups.n_pulses());
}

struct NoiseEstimate {
    double eta_total_detected = 0.0;
    double eta_un_detected = 0.0;
    double eta_cn_detected = 0.0;
    std::uint64_t n2m = 0;
    std::uint64_t n3m = 0;
    std::vector<std::string> warnings;
};

inline constexpr std::uint64_t kMinTriplesForNoise = 10;

/// Detected noise probability per pulse from the ratio of three- to two-photon pulses. The
/// uncorrelated part is the same ratio after dropping events earlier than `cut_ns`, which
/// should be at least three correlated-noise lifetimes.
inline NoiseEstimate estimate_noise_rates(const PulseGroups& groups, const DetectorConfig& d,
                                          double cut_ns) {
    detail::require(cut_ns > 0.0, "noise cut must be > 0");
    const CorrectionFactors k = correction_factors(d);
    const PhotonCounts all = photon_counts(groups, 0.0);
    const PhotonCounts late = photon_counts(groups, cut_ns);
    if (all.n2m == 0) throw EstimationError("no two-photon pulses: noise rate cannot be estimated");
    NoiseEstimate est;
    est.n2m = all.n2m;
    est.n3m = all.n3m;
    est.eta_total_detected = k.c3 * static_cast<double>(all.n3m) / (k.c2 * static_cast<double>(all.n2m));
    if (late.n2m > 0) {
        est.eta_un_detected = k.c3 * static_cast<double>(late.n3m) / (k.c2 * static_cast<double>(late.n2m));
    } else {
        est.warnings.push_back("no two-photon pulses after the cut: uncorrelated rate set to 0");
    }
    est.eta_cn_detected = est.eta_total_detected - est.eta_un_detected;
    if (all.n3m < kMinTriplesForNoise) {
        est.warnings.push_back("only " + std::to_string(all.n3m) +
                               " three-photon pulses: noise estimate is statistically weak");
    }
    return est;
}

}  // namespace hsps
