#pragma once

// Reference quantities for linear policy evaluation, integrated against the
// invariant law either by i.i.d. Monte-Carlo (batched, with standard errors) or,
// for one-dimensional models with a closed-form density, by midpoint quadrature.

#include "ctpe/core_rand.hpp"
#include "ctpe/features.hpp"
#include "ctpe/model.hpp"
#include "ctpe/observe.hpp"
#include "ctpe/parallel.hpp"
#include "ctpe/stats.hpp"
#include "ctpe/td.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctpe {

/// A linear system or quadratic form that the oracle cannot solve reliably.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solves m x = rhs densely; throws on (near-)singular m or a residual above
/// 1e-10 |rhs|.
inline Eigen::VectorXd solve_checked(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs, const char* who) {
    if (m.rows() != m.cols() || m.rows() != rhs.size()) throw DomainError(std::string(who) + ": shape mismatch");
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    const double smallest = s[s.size() - 1];
    if (!(smallest > 1e-12 * std::max(1.0, s[0]))) {
        std::ostringstream msg;
        msg << who << ": matrix is singular (smallest singular value " << smallest << ")";
        throw NumericalError(msg.str());
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    Eigen::VectorXd x = lu.solve(rhs);
    x += lu.solve(rhs - m * x);  // one step of refinement
    const double tol = 1e-10 * std::max(rhs.norm(), 1e-300);
    if ((m * x - rhs).norm() > tol && rhs.norm() > 0.0) {
        std::ostringstream msg;
        msg << who << ": residual " << (m * x - rhs).norm() << " above tolerance";
        throw NumericalError(msg.str());
    }
    return x;
}

/// Points and weights for expectations under the invariant law.
///
/// Monte-Carlo: n i.i.d. draws split into `batches` groups, each with its own
/// child stream. Quadrature: a single batch of midpoints weighted by the density.
class Integrator {
public:
    static Integrator monte_carlo(long n, const RngStream& stream, int batches = 100) {
        if (batches < 1 || n < batches) throw DomainError("Integrator: need n >= batches >= 1");
        Integrator it;
        it.n_ = n;
        it.batches_ = batches;
        it.stream_ = stream;
        return it;
    }

    static Integrator quadrature(long n_points) {
        if (n_points < 2) throw DomainError("Integrator: quadrature needs >= 2 points");
        Integrator it;
        it.n_ = n_points;
        it.batches_ = 1;
        it.quadrature_ = true;
        return it;
    }

    bool is_quadrature() const { return quadrature_; }
    long size() const { return n_; }
    int batches() const { return quadrature_ ? 1 : batches_; }

    /// visit(acc, x, weight) over every point; weights within a batch sum to 1,
    /// so each returned accumulator is that batch's estimate.
    template <class Acc, class Visit>
    std::vector<Acc> run(const ModelSpec& model, const Acc& zero, Visit visit) const {
        std::vector<Acc> out(static_cast<std::size_t>(batches()), zero);
        if (quadrature_) {
            if (model.dim != 1 || !model.stationary_density) {
                throw DomainError("Integrator: quadrature needs a one-dimensional model with a density");
            }
            std::vector<double> w(static_cast<std::size_t>(n_));
            double total = 0.0;
            for (long j = 0; j < n_; ++j) {
                w[j] = model.stationary_density(TorusPoint(-0.5 + (j + 0.5) / n_));
                total += w[j];
            }
            for (long j = 0; j < n_; ++j) visit(out[0], TorusPoint(-0.5 + (j + 0.5) / n_), w[j] / total);
            return out;
        }
        parallel_for(out.size(), [&](std::size_t b) {
            const long count = n_ / batches_ + (static_cast<long>(b) < n_ % batches_ ? 1 : 0);
            RngStream s = stream_.child(b);
            StationarySampler sampler(model);
            const double w = 1.0 / static_cast<double>(count);
            for (long i = 0; i < count; ++i) visit(out[b], sampler(s), w);
        });
        return out;
    }

    /// Share of the total sample held by batch b (equal up to rounding).
    double batch_weight(int b) const {
        if (quadrature_) return 1.0;
        const long count = n_ / batches_ + (b < n_ % batches_ ? 1 : 0);
        return static_cast<double>(count) / static_cast<double>(n_);
    }

private:
    Integrator() = default;

    long n_ = 0;
    int batches_ = 1;
    bool quadrature_ = false;
    RngStream stream_{0};
};

namespace detail {

/// Mean of per-batch estimates and the batch-means standard error.
template <class T>
struct BatchSummary {
    T mean;
    T se;
};

template <class T>
BatchSummary<T> summarise(const std::vector<T>& batches, const Integrator& integrator) {
    T mean = batches.front() * 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) mean += integrator.batch_weight(static_cast<int>(b)) * batches[b];
    T se = mean * 0.0;
    const std::size_t n = batches.size();
    if (n > 1) {
        for (const T& v : batches) se += (v - mean).cwiseAbs2().matrix();
        se = (se / static_cast<double>((n - 1) * n)).cwiseSqrt().eval();
    }
    return {mean, se};
}

/// phi, D_x phi, and the generator applied to each feature at one point.
class FeaturePoint {
    const ModelSpec* model_;
    const FeatureMap* phi_;

public:
    FeaturePoint(const ModelSpec& model, const FeatureMap& phi)
        : model_(&model), phi_(&phi), f(phi.size()), jac(phi.size(), phi.dim()), hess(phi.size(), phi.dim() * phi.dim()),
          lf(phi.size()) {
        if (phi.dim() != model.dim) throw DomainError("oracle: feature and model dimensions differ");
    }

    void at(const TorusPoint& x) {
        phi_->eval(x, f);
        phi_->jacobian(x, jac);
        phi_->hessian(x, hess);
        sigma = model_->diffusion(x);
        drift = model_->drift(x);
        reward = model_->reward(x);
        const StateMat a = sigma * sigma.transpose();
        const Eigen::Map<const Eigen::VectorXd> a_flat(a.data(), a.size());
        lf.noalias() = model_->rho * f - 0.5 * (hess * a_flat) - jac * Eigen::VectorXd(drift);
    }

    /// Row i = column-major sigma^T D^2 phi_i sigma.
    Eigen::MatrixXd noise_hessians() const {
        const int d = phi_->dim();
        const int p = static_cast<int>(sigma.cols());
        Eigen::MatrixXd out(phi_->size(), p * p);
        for (int i = 0; i < phi_->size(); ++i) {
            Eigen::MatrixXd h(d, d);
            for (int c = 0; c < d; ++c) {
                for (int r = 0; r < d; ++r) h(r, c) = hess(i, c * d + r);
            }
            const Eigen::MatrixXd q = sigma.transpose() * (0.5 * (h + h.transpose())) * sigma;
            out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(q.data(), q.size());
        }
        return out;
    }

    Eigen::VectorXd f;
    Eigen::MatrixXd jac;
    Eigen::MatrixXd hess;
    Eigen::VectorXd lf;  // L phi
    StateMat sigma;
    StateVec drift;
    double reward = 0.0;
};

}  // namespace detail

/// Limits of (regularised) linear TD(0): H theta* = b_vec, (mu I + H) theta*_mu = b_vec.
struct LimitSolution {
    Eigen::MatrixXd H;
    Eigen::VectorXd b_vec;
    Eigen::MatrixXd S;  // (H + H^T)/2
    Eigen::MatrixXd A;  // (H - H^T)/2
    Eigen::VectorXd theta_star;
    long n_samples = 0;

    struct StandardErrors {
        Eigen::MatrixXd H;
        Eigen::VectorXd b_vec;
        Eigen::VectorXd theta_star;
    } se;

    // per-batch estimates, kept for standard errors of derived quantities
    std::vector<Eigen::MatrixXd> batch_H;
    std::vector<Eigen::VectorXd> batch_b;

    Eigen::VectorXd theta_star_mu(double mu) const {
        if (!(mu >= 0.0)) throw DomainError("theta_star_mu: mu must be >= 0");
        return solve_checked(mu * Eigen::MatrixXd::Identity(H.rows(), H.cols()) + H, b_vec, "theta_star_mu");
    }

    /// Batch-means standard error of theta*_mu (zero for quadrature).
    Eigen::VectorXd theta_star_mu_se(double mu) const {
        const Eigen::VectorXd centre = theta_star_mu(mu);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(centre.size());
        const std::size_t n = batch_H.size();
        if (n < 2) return acc;
        const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(H.rows(), H.cols());
        for (std::size_t b = 0; b < n; ++b) {
            acc += (solve_checked(mu * id + batch_H[b], batch_b[b], "theta_star_mu") - centre).cwiseAbs2();
        }
        return (acc / static_cast<double>((n - 1) * n)).cwiseSqrt();
    }
};

/// Builds the S/A split and solves for theta* from an already estimated (H, b_vec).
inline LimitSolution make_limits(Eigen::MatrixXd h, Eigen::VectorXd b) {
    LimitSolution out;
    out.H = std::move(h);
    out.b_vec = std::move(b);
    out.S = 0.5 * (out.H + out.H.transpose());
    out.A = 0.5 * (out.H - out.H.transpose());
    out.theta_star = solve_checked(out.H, out.b_vec, "estimate_limits");
    out.se.H = Eigen::MatrixXd::Zero(out.H.rows(), out.H.cols());
    out.se.b_vec = Eigen::VectorXd::Zero(out.b_vec.size());
    out.se.theta_star = Eigen::VectorXd::Zero(out.b_vec.size());
    return out;
}

inline LimitSolution estimate_limits(const ModelSpec& model, const FeatureMap& phi, const Integrator& integrator) {
    struct Acc {
        Eigen::MatrixXd h;
        Eigen::VectorXd b;
        detail::FeaturePoint p;  // per-batch scratch
    };
    const int n = phi.size();
    const Acc zero{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n), detail::FeaturePoint(model, phi)};
    const std::vector<Acc> batches = integrator.run(model, zero, [](Acc& acc, const TorusPoint& x, double w) {
        acc.p.at(x);
        acc.h.noalias() += w * acc.p.f * acc.p.lf.transpose();
        acc.b.noalias() += (w * acc.p.reward) * acc.p.f;
    });
    std::vector<Eigen::MatrixXd> hs;
    std::vector<Eigen::VectorXd> bs;
    for (const Acc& a : batches) {
        hs.push_back(a.h);
        bs.push_back(a.b);
    }
    const auto h_sum = detail::summarise(hs, integrator);
    const auto b_sum = detail::summarise(bs, integrator);
    LimitSolution out = make_limits(h_sum.mean, b_sum.mean);
    out.n_samples = integrator.size();
    if (batches.size() > 1) {
        out.se.H = h_sum.se;
        out.se.b_vec = b_sum.se;
        out.batch_H = std::move(hs);
        out.batch_b = std::move(bs);
        out.se = {out.se.H, out.se.b_vec, out.theta_star_mu_se(0.0)};
    }
    return out;
}

/// Monte-Carlo limits from n i.i.d. draws of X ~ m (100 batches).
inline LimitSolution estimate_limits(const ModelSpec& model, const FeatureMap& phi, long n, const RngStream& stream) {
    if (n < 1000) throw DomainError("estimate_limits: N must be >= 1000");
    return estimate_limits(model, phi, Integrator::monte_carlo(n, stream));
}

/// S_l = rho E[phi phi^T] + (1/2) E[D_x phi sigma sigma^T D_x phi^T], the matrix of the
/// l-loss on linear value functions.
inline Eigen::MatrixXd ell_matrix(const ModelSpec& model, const FeatureMap& phi, const Integrator& integrator) {
    const int n = phi.size();
    const auto batches = integrator.run(model, Eigen::MatrixXd(Eigen::MatrixXd::Zero(n, n)),
                                        [&](Eigen::MatrixXd& acc, const TorusPoint& x, double w) {
                                            const Eigen::VectorXd f = phi.eval(x);
                                            const Eigen::MatrixXd js = phi.jacobian(x) * model.diffusion(x);
                                            acc.noalias() += (w * model.rho) * f * f.transpose();
                                            acc.noalias() += (0.5 * w) * js * js.transpose();
                                        });
    return detail::summarise(batches, integrator).mean;
}

/// l(v(., theta), v(., theta_ref)) for a precomputed S_l.
inline double ell_loss(const Theta& theta, const Theta& theta_ref, const Eigen::MatrixXd& s_ell) {
    if (theta.size() != theta_ref.size() || theta.size() != s_ell.rows()) {
        throw DomainError("ell_loss: dimension mismatch");
    }
    const Eigen::VectorXd u = theta - theta_ref;
    return u.dot(s_ell * u);
}

inline double ell_loss(const Theta& theta, const Theta& theta_ref, const ModelSpec& model, const FeatureMap& phi,
                       long n, const RngStream& stream) {
    return ell_loss(theta, theta_ref, ell_matrix(model, phi, Integrator::monte_carlo(n, stream)));
}

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

struct MomentRow {
    double dt = 0.0;
    Estimate mean_std;
    Estimate var_std;
    Estimate mean_stoch;
    Estimate var_stoch;
};

/// Small-dt limits of the conditional moments at x.
struct MomentLimits {
    double bellman = 0.0;           // L v(x) - r(x), the limit of both conditional means
    double std_scaled_var = 0.0;    // |sigma^T grad v|^2, the limit of dt Var(delta | x)
    double stoch_var = 0.0;         // tr((sigma sigma^T D^2 v)^2) / 2, the limit of Var(delta~ | x)
};

struct MomentReport {
    TorusPoint x;
    Theta theta;
    std::vector<double> dt_grid;
    std::vector<MomentRow> rows;
    MomentLimits analytic_limits;
};

inline MomentLimits moment_limits(const ModelSpec& model, const FeatureMap& phi, const Theta& theta,
                                  const TorusPoint& x) {
    const LinearValue v{&phi, theta};
    const StateMat sigma = model.diffusion(x);
    const StateVec g = sigma.transpose() * v.gradient(x);
    TDWorkspace ws(phi);
    const Eigen::MatrixXd q = ws.noise_quadratic_form(model, theta, x);
    MomentLimits out;
    out.bellman = generator_apply(model, v, x) - model.reward(x);
    out.std_scaled_var = g.squaredNorm();
    out.stoch_var = 0.5 * q.squaredNorm();
    return out;
}

namespace detail {

/// Mean and unbiased variance with standard errors; the variance error uses the
/// sample fourth central moment.
inline void moment_estimates(const std::vector<double>& xs, Estimate& mean, Estimate& var) {
    Welford w;
    for (double v : xs) w.add(v);
    mean = {w.mean(), w.standard_error()};
    const double n = static_cast<double>(xs.size());
    double m4 = 0.0;
    for (double v : xs) {
        const double d = v - w.mean();
        m4 += d * d * d * d;
    }
    m4 /= n;
    const double s2 = w.variance();
    var = {s2, std::sqrt(std::max(0.0, m4 - s2 * s2) / n)};
}

}  // namespace detail

/// Conditional mean and variance of the standard and stochastic TD at a fixed
/// state, from the same n transitions per step size. Grid entry j uses stream.child(j).
inline MomentReport conditional_moments(const ModelSpec& model, const FeatureMap& phi, const Theta& theta,
                                        const TorusPoint& x, const std::vector<double>& dt_grid, long n,
                                        ObservationMode mode, const RngStream& stream,
                                        NoiseLaw law = NoiseLaw::gaussian, int n_sub = 32) {
    if (n < 2) throw DomainError("conditional_moments: need at least two samples");
    if (law == NoiseLaw::rademacher && mode != ObservationMode::simulator) {
        throw DomainError("conditional_moments: Rademacher noise needs simulator observations");
    }
    require_theta(theta, phi);
    MomentReport report;
    report.x = x;
    report.theta = theta;
    report.dt_grid = dt_grid;
    report.analytic_limits = moment_limits(model, phi, theta, x);
    report.rows.resize(dt_grid.size());
    const StateVec b = model.drift(x);
    parallel_for(dt_grid.size(), [&](std::size_t j) {
        const double dt = dt_grid[j];
        RngStream s = stream.child(j);
        TDWorkspace ws(phi);
        TDValue std_td, stoch_td;
        std::vector<double> ds(static_cast<std::size_t>(n)), dss(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            Observation obs;
            if (mode == ObservationMode::realworld) {
                obs = realworld_observation(model, x, dt, n_sub, s);
            } else {
                obs = simulator_observation(model, x, dt, draw_noise(law, model, theta, x, ws, s));
            }
            ws.standard(obs, theta, model.rho, std_td);
            ws.stochastic(obs, theta, model.rho, b, stoch_td);
            ds[i] = std_td.delta;
            dss[i] = stoch_td.delta;
        }
        MomentRow& row = report.rows[j];
        row.dt = dt;
        detail::moment_estimates(ds, row.mean_std, row.var_std);
        detail::moment_estimates(dss, row.mean_stoch, row.var_stoch);
    });
    return report;
}

/// E[delta^2] against E[E[delta|X]^2] + E[Var(delta|X)] by nested sampling
/// (n_outer states, n_inner transitions each), with unbiased inner estimators.
struct SquareDecomposition {
    Estimate mean_square;
    Estimate bellman_square;
    Estimate conditional_variance;
};

inline SquareDecomposition td_square_decomposition(const ModelSpec& model, const FeatureMap& phi, const Theta& theta,
                                                   double dt, TDVariant variant, long n_outer, long n_inner,
                                                   const RngStream& stream) {
    if (n_outer < 2 || n_inner < 2) throw DomainError("td_square_decomposition: need >= 2 outer and inner draws");
    RngStream states = stream.child(0);
    RngStream noise = stream.child(1);
    StationarySampler sampler(model);
    TDWorkspace ws(phi);
    TDValue td;
    Welford sq, bell, var;
    for (long o = 0; o < n_outer; ++o) {
        const TorusPoint x = sampler(states);
        Welford inner, inner_sq;
        for (long i = 0; i < n_inner; ++i) {
            ws.evaluate(simulator_observation(model, x, dt, noise), theta, model.rho, model.drift, variant, td);
            inner.add(td.delta);
            inner_sq.add(td.delta * td.delta);
        }
        sq.add(inner_sq.mean());
        bell.add(inner.mean() * inner.mean() - inner.variance() / static_cast<double>(n_inner));
        var.add(inner.variance());
    }
    return {{sq.mean(), sq.standard_error()}, {bell.mean(), bell.standard_error()}, {var.mean(), var.standard_error()}};
}

/// Quadratic forms of the residual-gradient objectives
///
///   F(theta)  = E[(Lv - r)^2] + E[tr((sigma sigma^T D^2 v)^2)] / 2 + mu |theta|^2
///   F~(theta) = E[(Lv - r)^2] + mu |theta|^2
///
/// in the form theta^T M theta - 2 q^T theta + c0, with their minimisers. The
/// residual-gradient update descends F/2; F~ is what the variance-free
/// extensions target.
struct RGLimits {
    double mu = 0.0;
    Eigen::MatrixXd Q;  // E[L phi L phi^T]
    Eigen::MatrixXd K;  // E[<sigma^T D^2 phi_i sigma, sigma^T D^2 phi_j sigma>_F]
    Eigen::VectorXd q;  // E[r L phi]
    double c0 = 0.0;    // E[r^2]
    Eigen::VectorXd theta;        // argmin F
    Eigen::VectorXd theta_tilde;  // argmin F~
    Eigen::VectorXd theta_se;
    Eigen::VectorXd theta_tilde_se;

    Eigen::MatrixXd matrix() const { return Q + 0.5 * K + mu * Eigen::MatrixXd::Identity(Q.rows(), Q.cols()); }
    Eigen::MatrixXd matrix_tilde() const { return Q + mu * Eigen::MatrixXd::Identity(Q.rows(), Q.cols()); }

    double objective(const Theta& t) const { return t.dot(matrix() * t) - 2.0 * q.dot(t) + c0; }
    double objective_tilde(const Theta& t) const { return t.dot(matrix_tilde() * t) - 2.0 * q.dot(t) + c0; }
};

namespace detail {

inline Eigen::VectorXd minimise_quadratic(const Eigen::MatrixXd& m, const Eigen::VectorXd& q, const char* who) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues()[0] > 0.0)) {
        std::ostringstream msg;
        msg << who << ": quadratic form is not positive definite (min eigenvalue " << eig.eigenvalues()[0] << ")";
        throw NumericalError(msg.str());
    }
    return solve_checked(sym, q, who);
}

}  // namespace detail

inline RGLimits rg_limits(const ModelSpec& model, const FeatureMap& phi, double mu, const Integrator& integrator) {
    if (!(mu >= 0.0)) throw DomainError("rg_limits: mu must be >= 0");
    const int n = phi.size();
    struct Acc {
        Eigen::MatrixXd Q, K;
        Eigen::VectorXd q;
        double c0;
        detail::FeaturePoint p;  // per-batch scratch
    };
    const Acc zero{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n), 0.0,
                   detail::FeaturePoint(model, phi)};
    const auto batches = integrator.run(model, zero, [](Acc& acc, const TorusPoint& x, double w) {
        acc.p.at(x);
        const Eigen::MatrixXd nh = acc.p.noise_hessians();
        acc.Q.noalias() += w * acc.p.lf * acc.p.lf.transpose();
        acc.K.noalias() += w * nh * nh.transpose();
        acc.q.noalias() += (w * acc.p.reward) * acc.p.lf;
        acc.c0 += w * acc.p.reward * acc.p.reward;
    });

    auto solve = [&](const Acc& a, double k_weight) {
        return detail::minimise_quadratic(a.Q + k_weight * a.K + mu * Eigen::MatrixXd::Identity(n, n), a.q,
                                          "rg_limits");
    };
    Acc mean = zero;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const double w = integrator.batch_weight(static_cast<int>(b));
        mean.Q += w * batches[b].Q;
        mean.K += w * batches[b].K;
        mean.q += w * batches[b].q;
        mean.c0 += w * batches[b].c0;
    }
    RGLimits out;
    out.mu = mu;
    out.Q = mean.Q;
    out.K = mean.K;
    out.q = mean.q;
    out.c0 = mean.c0;
    out.theta = solve(mean, 0.5);
    out.theta_tilde = solve(mean, 0.0);
    std::vector<Eigen::VectorXd> t, tt;
    for (const Acc& a : batches) {
        t.push_back(solve(a, 0.5));
        tt.push_back(solve(a, 0.0));
    }
    out.theta_se = detail::summarise(t, integrator).se;
    out.theta_tilde_se = detail::summarise(tt, integrator).se;
    return out;
}

inline RGLimits rg_limits(const ModelSpec& model, const FeatureMap& phi, double mu, long n, const RngStream& stream) {
    return rg_limits(model, phi, mu, Integrator::monte_carlo(n, stream));
}

/// Inputs of the eigenvalue-sector bound |Im l| <= sqrt(2 / (rho s2)) kappa Re l,
/// kappa = sup |b + (s2/2) grad ln m|, valid for constant scalar diffusion s2.
struct SectorBound {
    double rho;
    double sigma2;
    double kappa;
};

struct TraceReport {
    double trace_h_hinv_t = 0.0;  // tr(H H^{-T})
    double trace_s = 0.0;
    Eigen::VectorXd spectrum_s;                  // ascending
    Eigen::VectorXcd eigenvalues_h;
    double min_real_part = 0.0;
    std::optional<double> sector_ratio;  // max |Im l| / (sqrt(2/(rho s2)) kappa Re l)
    bool sector_bound_holds = true;
};

inline TraceReport trace_diagnostics(const Eigen::MatrixXd& h, std::optional<SectorBound> bound = std::nullopt) {
    if (h.rows() != h.cols() || h.rows() == 0) throw DomainError("trace_diagnostics: H must be square");
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
    if (!lu.isInvertible()) throw NumericalError("trace_diagnostics: H is singular");
    TraceReport r;
    r.trace_h_hinv_t = (h * lu.inverse().transpose()).trace();
    const Eigen::MatrixXd s = 0.5 * (h + h.transpose());
    r.trace_s = s.trace();
    r.spectrum_s = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s, Eigen::EigenvaluesOnly).eigenvalues();
    r.eigenvalues_h = Eigen::EigenSolver<Eigen::MatrixXd>(h, false).eigenvalues();
    r.min_real_part = r.eigenvalues_h.real().minCoeff();
    if (bound) {
        const double c = std::sqrt(2.0 / (bound->rho * bound->sigma2)) * bound->kappa;
        double ratio = 0.0;
        for (const std::complex<double>& l : r.eigenvalues_h) {
            if (l.real() <= 0.0) {
                ratio = std::numeric_limits<double>::infinity();
                break;
            }
            if (l.imag() != 0.0) ratio = std::max(ratio, std::abs(l.imag()) / (c * l.real()));
        }
        r.sector_ratio = ratio;
        r.sector_bound_holds = ratio <= 1.0;
    }
    return r;
}

inline TraceReport trace_diagnostics(const LimitSolution& limits, std::optional<SectorBound> bound = std::nullopt) {
    return trace_diagnostics(limits.H, bound);
}

/// kappa for the benchmark: b + (s2/2) grad ln m = 2b, so kappa = 2 sup|b| = 2 pi s2 / sqrt(3).
inline SectorBound benchmark_sector_bound(const BenchmarkModel& model) {
    return {model.rho(), model.sigma2(), kTwoPi * model.sigma2() / std::sqrt(3.0)};
}

/// sup |r| over a product grid with `points_per_axis` points per coordinate.
inline double reward_sup(const ModelSpec& model, int points_per_axis = 4096) {
    long total = 1;
    for (int i = 0; i < model.dim; ++i) total *= points_per_axis;
    StateVec x(model.dim);
    double sup = 0.0;
    for (long idx = 0; idx < total; ++idx) {
        long rest = idx;
        for (int i = 0; i < model.dim; ++i) {
            x[i] = -0.5 + static_cast<double>(rest % points_per_axis) / points_per_axis;
            rest /= points_per_axis;
        }
        sup = std::max(sup, std::abs(model.reward(TorusPoint(x))));
    }
    return sup;
}

}  // namespace ctpe
