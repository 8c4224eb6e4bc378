#pragma once

// Invariant-check suites: analytic against empirical values, each row with its
// own tolerance rule.

#include "ctpe/core_rand.hpp"
#include "ctpe/experiment.hpp"
#include "ctpe/features.hpp"
#include "ctpe/model.hpp"
#include "ctpe/oracle.hpp"
#include "ctpe/stats.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace ctpe {

struct CheckRow {
    enum class Rule {
        relative,  // |observed - expected| <= tolerance |expected|
        absolute,  // |observed - expected| <= tolerance
        at_least,  // observed >= expected
        at_most,   // observed <= expected
    };

    std::string name;
    double expected = 0.0;
    double observed = 0.0;
    double tolerance = 0.0;
    Rule rule = Rule::relative;

    bool pass() const {
        if (!std::isfinite(observed)) return false;
        switch (rule) {
            case Rule::relative: return std::abs(observed - expected) <= tolerance * std::abs(expected);
            case Rule::absolute: return std::abs(observed - expected) <= tolerance;
            case Rule::at_least: return observed >= expected;
            case Rule::at_most: return observed <= expected;
        }
        return false;
    }

    std::string rule_text() const {
        std::ostringstream o;
        o.precision(3);
        switch (rule) {
            case Rule::relative: o << "rel " << tolerance; break;
            case Rule::absolute: o << "abs " << tolerance; break;
            case Rule::at_least: o << ">= expected"; break;
            case Rule::at_most: o << "<= expected"; break;
        }
        return o.str();
    }
};

struct CheckReport {
    std::string suite;
    std::vector<CheckRow> rows;

    bool passed() const {
        for (const CheckRow& r : rows) {
            if (!r.pass()) return false;
        }
        return !rows.empty();
    }

    std::string table() const {
        std::ostringstream o;
        char line[256];
        std::snprintf(line, sizeof line, "%-44s %14s %14s %-12s %s\n", "check", "expected", "observed", "rule",
                      "result");
        o << "suite " << suite << '\n' << line;
        for (const CheckRow& r : rows) {
            std::snprintf(line, sizeof line, "%-44s %14.6g %14.6g %-12s %s\n", r.name.c_str(), r.expected, r.observed,
                          r.rule_text().c_str(), r.pass() ? "PASS" : "FAIL");
            o << line;
        }
        o << (passed() ? "all checks passed" : "some checks FAILED") << '\n';
        return o.str();
    }
};

/// Empirical variances of xi.g and xi^T A xi - tr A over n Gaussian draws, and of
/// the quadratic form under the rotated Rademacher law.
struct NoiseIdentities {
    double var_linear = 0.0;
    double expected_linear = 0.0;  // |g|^2
    double var_quadratic = 0.0;
    double expected_quadratic = 0.0;  // 2 tr(A^2)
    double var_quadratic_rademacher = 0.0;
};

inline NoiseIdentities noise_identities(const Eigen::VectorXd& g, const Eigen::MatrixXd& a, long n,
                                        const RngStream& stream) {
    require_symmetric(a, "noise_identities");
    if (g.size() != a.rows()) throw DomainError("noise_identities: dimension mismatch");
    const int d = static_cast<int>(g.size());
    RngStream gauss = stream.child(0);
    RngStream signs = stream.child(1);
    const double tr = a.trace();
    Welford lin, quad, rad;
    Eigen::VectorXd xi(d);
    for (long i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) xi[j] = gauss.normal();
        lin.add(xi.dot(g));
        quad.add(xi.dot(a * xi) - tr);
        const StateVec z = rademacher_rotated(a, signs);
        rad.add(z.dot(a * Eigen::VectorXd(z)) - tr);
    }
    return {lin.variance(), g.squaredNorm(), quad.variance(), 2.0 * (a * a).trace(), rad.variance()};
}

struct CheckOptions {
    long n = 1000000;
    std::uint64_t seed = 0;
};

/// Conditional moment limits at x = 0.2 for v = V, plus the squared-TD decomposition.
inline CheckReport check_moments(const BenchmarkModel& bm, const FeatureMap& phi, const CheckOptions& opt) {
    CheckReport rep{"moments", {}};
    const LimitSolution lim = estimate_limits(bm, phi, Integrator::quadrature(4096));
    const TorusPoint x(0.2);
    const std::vector<double> grid{1e-2, 1e-3, 1e-4};
    const MomentReport m =
        conditional_moments(bm, phi, lim.theta_star, x, grid, opt.n, ObservationMode::simulator, RngStream(opt.seed, {1}));
    const MomentLimits& l = m.analytic_limits;
    for (const MomentRow& r : m.rows) {
        std::ostringstream dt;
        dt << r.dt;
        const bool finest = r.dt == grid.back();
        rep.rows.push_back({"dt*Var(delta|x), dt=" + dt.str(), l.std_scaled_var, r.dt * r.var_std.value,
                            finest ? 0.05 : 0.25, CheckRow::Rule::relative});
        rep.rows.push_back({"Var(delta~|x), dt=" + dt.str(), l.stoch_var, r.var_stoch.value, 0.05,
                            CheckRow::Rule::relative});
        if (finest) {
            rep.rows.push_back({"E[delta|x] within 3 se", l.bellman, r.mean_std.value, 3.0 * r.mean_std.se,
                                CheckRow::Rule::absolute});
            rep.rows.push_back({"E[delta~|x] within 3 se", l.bellman, r.mean_stoch.value, 3.0 * r.mean_stoch.se,
                                CheckRow::Rule::absolute});
        }
    }
    Theta off = lim.theta_star;
    off[0] += 0.3;
    off[2] -= 0.2;
    const SquareDecomposition dec = td_square_decomposition(bm, phi, off, 1e-2, TDVariant::stochastic, 2000, 200,
                                                            RngStream(opt.seed, {2}));
    const double combined = std::sqrt(dec.mean_square.se * dec.mean_square.se + dec.bellman_square.se * dec.bellman_square.se +
                                      dec.conditional_variance.se * dec.conditional_variance.se);
    rep.rows.push_back({"E[d^2] = E[E[d|X]^2] + E[Var(d|X)]", dec.mean_square.value,
                        dec.bellman_square.value + dec.conditional_variance.value, 2.0 * combined,
                        CheckRow::Rule::absolute});
    return rep;
}

/// theta*, the spectrum of S and H, and the regularisation bias.
inline CheckReport check_limits(const BenchmarkModel& bm, const FeatureMap& phi, const CheckOptions& opt) {
    CheckReport rep{"limits", {}};
    const LimitSolution lim = estimate_limits(bm, phi, opt.n, RngStream(opt.seed, {3}));
    // V = sin(2 pi x) is the second trigonometric feature
    Theta target = Theta::Zero(phi.size());
    target[1] = 1.0;
    for (int i = 0; i < lim.theta_star.size(); ++i) {
        rep.rows.push_back({"theta*[" + std::to_string(i) + "]", target[i], lim.theta_star[i], 2e-2,
                            CheckRow::Rule::absolute});
    }
    const TraceReport tr = trace_diagnostics(lim, benchmark_sector_bound(bm));
    rep.rows.push_back({"min eig S", 0.45, tr.spectrum_s[0], 0.0, CheckRow::Rule::at_least});
    rep.rows.push_back({"min Re eig H", 0.0, tr.min_real_part, 0.0, CheckRow::Rule::at_least});
    rep.rows.push_back({"sector bound ratio", 1.0, tr.sector_ratio.value_or(0.0), 0.0, CheckRow::Rule::at_most});
    rep.rows.push_back({"residual |H theta* - b|", 0.0, (lim.H * lim.theta_star - lim.b_vec).norm(),
                        1e-10 * std::max(1.0, lim.b_vec.norm()), CheckRow::Rule::absolute});
    double previous = std::numeric_limits<double>::infinity();
    // |theta* - theta*_mu| / mu must not increase with mu
    for (double mu : {0.05, 0.1, 0.2, 0.4}) {
        const double ratio = (lim.theta_star - lim.theta_star_mu(mu)).norm() / mu;
        std::ostringstream name;
        name << "|theta*-theta*_mu|/mu, mu=" << mu;
        rep.rows.push_back({name.str(), previous, ratio, 0.0, CheckRow::Rule::at_most});
        previous = ratio;
    }
    return rep;
}

/// Gaussian and rotated-Rademacher variance identities for 10 random (g, A).
inline CheckReport check_variances(const CheckOptions& opt, int dim = 3, int pairs = 10) {
    CheckReport rep{"variances", {}};
    RngStream gen(opt.seed, {4});
    for (int p = 0; p < pairs; ++p) {
        RngStream s = gen.child(static_cast<std::uint64_t>(p));
        const Eigen::VectorXd g = gaussian(s, dim);
        Eigen::MatrixXd b(dim, dim);
        for (int j = 0; j < dim * dim; ++j) b.data()[j] = s.normal();
        const Eigen::MatrixXd a = 0.5 * (b + b.transpose());
        const NoiseIdentities id = noise_identities(g, a, opt.n, s.child(1));
        const std::string tag = " #" + std::to_string(p);
        rep.rows.push_back({"Var(xi.g)" + tag, id.expected_linear, id.var_linear, 0.02, CheckRow::Rule::relative});
        rep.rows.push_back({"Var(xi'A xi - tr A)" + tag, id.expected_quadratic, id.var_quadratic, 0.02,
                            CheckRow::Rule::relative});
        rep.rows.push_back({"Rademacher Var(xi'A xi)" + tag, 0.0, id.var_quadratic_rademacher,
                            1e-24 * std::max(1.0, id.expected_quadratic * id.expected_quadratic),
                            CheckRow::Rule::absolute});
    }
    return rep;
}

/// Residual-gradient minimisers: the Hessian-variance bias and its removal.
inline CheckReport check_rg(const BenchmarkModel& bm, const FeatureMap& phi, double mu, const CheckOptions& opt) {
    CheckReport rep{"rg", {}};
    const LimitSolution lim = estimate_limits(bm, phi, Integrator::quadrature(4096));
    const RGLimits rg = rg_limits(bm, phi, 0.0, opt.n, RngStream(opt.seed, {5}));
    const Eigen::Index i = 1;
    rep.rows.push_back({"|theta_RG - theta*| / se", 5.0,
                        (rg.theta - lim.theta_star).norm() / std::max(rg.theta_se.norm(), 1e-300), 0.0,
                        CheckRow::Rule::at_least});
    rep.rows.push_back({"F~_0 minimiser = theta*", 0.0, (rg.theta_tilde - lim.theta_star).norm(),
                        3.0 * rg.theta_tilde_se.norm() + 1e-8, CheckRow::Rule::absolute});
    const RGLimits rg_mu = rg_limits(bm, phi, mu, Integrator::quadrature(4096));
    const RGLimits rg_mu_mc = rg_limits(bm, phi, mu, opt.n, RngStream(opt.seed, {6}));
    rep.rows.push_back({"argmin F_mu[1], quadrature vs MC", rg_mu.theta[i], rg_mu_mc.theta[i],
                        4.0 * rg_mu_mc.theta_se[i] + 1e-8, CheckRow::Rule::absolute});
    const RGLimits huge = rg_limits(bm, phi, 1e8, Integrator::quadrature(1024));
    rep.rows.push_back({"|argmin F_mu| for mu = 1e8", 0.0, huge.theta.norm(), 1e-6, CheckRow::Rule::absolute});
    return rep;
}

/// Runs one suite by name using the model and features of `config`.
inline CheckReport run_check(const std::string& suite, const ExperimentConfig& config, const CheckOptions& opt) {
    const BenchmarkModel bm = config.build_model();
    const auto phi = make_features(config.features);
    if (suite == "moments") return check_moments(bm, *phi, opt);
    if (suite == "limits") return check_limits(bm, *phi, opt);
    if (suite == "variances") return check_variances(opt);
    if (suite == "rg") return check_rg(bm, *phi, config.mu_value(), opt);
    throw DomainError("unknown check suite '" + suite + "' (moments, limits, variances, rg)");
}

}  // namespace ctpe
