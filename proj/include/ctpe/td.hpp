#pragma once

// Temporal differences for the linear parametrisation.
//
//   standard   delta   = (v(X) - exp(-rho dt) v(X') - dt R) / dt
//   stochastic delta~  = delta + Z / dt,  Z = (X' - X - dt b(X)) . grad_x v(X)
//
// X' - X is the minimal torus displacement. Every TDValue also carries the
// theta-gradient of the TD itself (what residual-gradient methods descend);
// TD(0) uses phi(X) instead and never reads grad_theta.

#include "ctpe/core_rand.hpp"
#include "ctpe/features.hpp"
#include "ctpe/model.hpp"
#include "ctpe/observe.hpp"

#include <cmath>

namespace ctpe {

enum class TDVariant { standard, stochastic };

enum class NoiseLaw { gaussian, rademacher };

struct TDValue {
    double delta = 0.0;
    double correction = 0.0;  // Z / dt; zero for the standard TD
    Eigen::VectorXd grad_theta;
};

/// Reusable buffers for evaluating TDs against one feature map.
class TDWorkspace {
public:
    explicit TDWorkspace(const FeatureMap& phi)
        : phi_(&phi),
          phi_x_(phi.size()),
          phi_next_(phi.size()),
          jac_(phi.size(), phi.dim()),
          hess_(phi.size(), phi.dim() * phi.dim()) {}

    const FeatureMap& features() const { return *phi_; }
    /// phi(X) of the last evaluated observation.
    const Eigen::VectorXd& phi_x() const { return phi_x_; }

    /// Standard TD into `out`.
    void standard(const Observation& obs, const Theta& theta, double rho, TDValue& out) {
        if (!(obs.dt > 0.0)) throw DomainError("temporal difference: dt must be > 0");
        require_theta(theta, *phi_);
        phi_->eval(obs.x, phi_x_);
        phi_->eval(obs.x_next, phi_next_);
        const double gamma = std::exp(-rho * obs.dt);
        const double inv_dt = 1.0 / obs.dt;
        out.delta = (theta.dot(phi_x_) - gamma * theta.dot(phi_next_) - obs.dt * obs.reward) * inv_dt;
        out.correction = 0.0;
        out.grad_theta.resize(phi_->size());
        out.grad_theta.noalias() = inv_dt * (phi_x_ - gamma * phi_next_);
    }

    /// Stochastic TD into `out`; `drift_at_x` is b(X).
    void stochastic(const Observation& obs, const Theta& theta, double rho, const StateVec& drift_at_x,
                    TDValue& out) {
        standard(obs, theta, rho, out);
        phi_->jacobian(obs.x, jac_);
        const StateVec incr = torus_displacement(obs.x, obs.x_next) - obs.dt * drift_at_x;
        const double inv_dt = 1.0 / obs.dt;
        // grad_theta of Z/dt is jac * incr / dt
        grad_z_.noalias() = jac_ * incr;
        out.correction = theta.dot(grad_z_) * inv_dt;
        out.delta += out.correction;
        out.grad_theta.noalias() += inv_dt * grad_z_;
    }

    template <class Drift>
    void evaluate(const Observation& obs, const Theta& theta, double rho, const Drift& drift,
                  TDVariant variant, TDValue& out) {
        if (variant == TDVariant::standard) {
            standard(obs, theta, rho, out);
        } else {
            stochastic(obs, theta, rho, drift(obs.x), out);
        }
    }

    /// sigma^T D^2_x v(x, theta) sigma, the matrix whose quadratic form in the
    /// noise drives the stochastic TD variance.
    Eigen::MatrixXd noise_quadratic_form(const ModelSpec& model, const Theta& theta, const TorusPoint& x) {
        phi_->hessian(x, hess_);
        const int d = phi_->dim();
        const Eigen::VectorXd flat = hess_.transpose() * theta;
        Eigen::MatrixXd h(d, d);
        for (int c = 0; c < d; ++c) {
            for (int r = 0; r < d; ++r) h(r, c) = flat[c * d + r];
        }
        h = 0.5 * (h + h.transpose()).eval();
        const Eigen::MatrixXd sigma = model.diffusion(x);
        Eigen::MatrixXd q = sigma.transpose() * h * sigma;
        return 0.5 * (q + q.transpose());
    }

private:
    const FeatureMap* phi_;
    Eigen::VectorXd phi_x_;
    Eigen::VectorXd phi_next_;
    Eigen::MatrixXd jac_;
    Eigen::MatrixXd hess_;
    Eigen::VectorXd grad_z_;
};

inline TDValue standard_td(const Observation& obs, const Theta& theta, const FeatureMap& phi, double rho) {
    TDWorkspace ws(phi);
    TDValue out;
    ws.standard(obs, theta, rho, out);
    return out;
}

/// Z = (X' - X - dt b(X)) . grad_x v(X, theta).
template <class Drift>
double correction_term(const Observation& obs, const Theta& theta, const FeatureMap& phi,
                       const Drift& drift) {
    const StateVec incr = torus_displacement(obs.x, obs.x_next) - obs.dt * StateVec(drift(obs.x));
    return incr.dot(value_grad_x(theta, phi, obs.x));
}

template <class Drift>
TDValue stochastic_td(const Observation& obs, const Theta& theta, const FeatureMap& phi, double rho,
                      const Drift& drift) {
    TDWorkspace ws(phi);
    TDValue out;
    ws.stochastic(obs, theta, rho, drift(obs.x), out);
    return out;
}

/// Transition noise under the chosen law. The Rademacher law is rotated by
/// sigma^T D^2 v sigma at x so that the quadratic-form term is deterministic.
inline StateVec draw_noise(NoiseLaw law, const ModelSpec& model, const Theta& theta, const TorusPoint& x,
                           TDWorkspace& ws, RngStream& stream) {
    if (law == NoiseLaw::gaussian) return draw_gaussian(stream, model.noise_dim);
    return rademacher_rotated(ws.noise_quadratic_form(model, theta, x), stream);
}

namespace detail {

inline void accumulate(TDValue& acc, const TDValue& v, bool first) {
    if (first) {
        acc = v;
        return;
    }
    acc.delta += v.delta;
    acc.correction += v.correction;
    acc.grad_theta += v.grad_theta;
}

inline void scale(TDValue& acc, double s) {
    acc.delta *= s;
    acc.correction *= s;
    acc.grad_theta *= s;
}

}  // namespace detail

/// Average of n stochastic TDs along n consecutive Euler steps started at x.
inline TDValue multistep_td(const ModelSpec& model, const TorusPoint& x, const Theta& theta,
                            const FeatureMap& phi, double dt, int n, RngStream& stream,
                            NoiseLaw law = NoiseLaw::gaussian) {
    if (n < 1) throw DomainError("multistep_td: n must be >= 1");
    TDWorkspace ws(phi);
    TDValue acc, one;
    TorusPoint cur = x;
    for (int i = 0; i < n; ++i) {
        const StateVec z = draw_noise(law, model, theta, cur, ws, stream);
        const Observation obs = simulator_observation(model, cur, dt, z);
        ws.stochastic(obs, theta, model.rho, model.drift(cur), one);
        detail::accumulate(acc, one, i == 0);
        cur = obs.x_next;
    }
    detail::scale(acc, 1.0 / n);
    return acc;
}

/// Average of N stochastic TDs from N independent noises at the same x.
inline TDValue minibatch_td(const ModelSpec& model, const TorusPoint& x, const Theta& theta,
                            const FeatureMap& phi, double dt, int batch, RngStream& stream,
                            NoiseLaw law = NoiseLaw::gaussian) {
    if (batch < 1) throw DomainError("minibatch_td: N must be >= 1");
    TDWorkspace ws(phi);
    TDValue acc, one;
    const StateVec b = model.drift(x);
    for (int i = 0; i < batch; ++i) {
        const StateVec z = draw_noise(law, model, theta, x, ws, stream);
        ws.stochastic(simulator_observation(model, x, dt, z), theta, model.rho, b, one);
        detail::accumulate(acc, one, i == 0);
    }
    detail::scale(acc, 1.0 / batch);
    return acc;
}

}  // namespace ctpe
