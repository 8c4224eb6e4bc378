#pragma once

// TD(0) / mu-TD(0) (semi-gradient), the residual-gradient family, Polyak
// averaging, and the training loop over an i.i.d. observation stream.

#include "ctpe/core_rand.hpp"
#include "ctpe/features.hpp"
#include "ctpe/model.hpp"
#include "ctpe/observe.hpp"
#include "ctpe/td.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ctpe {

/// The iterate left the admissible region (non-finite or |theta| > threshold).
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(long k, const std::string& what)
        : std::runtime_error("divergence at k=" + std::to_string(k) + ": " + what), k_(k) {}
    long k() const { return k_; }

private:
    long k_;
};

enum class Algorithm { td0, rg };

enum class RGExtension { none, multistep, sigma_schedule, minibatch, rademacher };

/// Integer sequence max(1, ceil(c (k+1)^a)); used for n_k and N_k.
struct CountSchedule {
    double c = 1.0;
    double a = 0.0;

    int at(long k) const {
        const double v = std::ceil(c * std::pow(static_cast<double>(k) + 1.0, a) - 1e-9);
        return std::max(1, static_cast<int>(v));
    }
};

struct LearnerConfig {
    Algorithm algorithm = Algorithm::td0;
    TDVariant variant = TDVariant::stochastic;
    double mu = 0.0;
    std::optional<double> ball_radius;  // projection on B_M when set
    bool averaging = false;
    Schedule lr = Schedule::power(2.0, 1.0);

    RGExtension rg_extension = RGExtension::none;
    CountSchedule rg_count{1.0, 0.5};                     // n_k (multistep) or N_k (minibatch)
    Schedule sigma_scale = Schedule::power(1.0, 0.125);   // sigma_k / sigma (sigma_schedule)

    double divergence_threshold = 1e8;

    void validate() const {
        if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("LearnerConfig: mu must be >= 0");
        if (ball_radius && !(*ball_radius > 0.0)) throw DomainError("LearnerConfig: M must be > 0");
        if (algorithm == Algorithm::td0 && rg_extension != RGExtension::none) {
            throw DomainError("LearnerConfig: RG extensions require algorithm = rg");
        }
        if (rg_extension != RGExtension::none && variant != TDVariant::stochastic) {
            throw DomainError("LearnerConfig: RG extensions are defined for the stochastic TD");
        }
    }
};

/// M >= min(M_0, M_mu) with M_mu = sup|r| / mu, so the projection cannot move theta*_mu.
inline void validate_radius(const LearnerConfig& config, double theta_star_norm, double reward_sup) {
    if (!config.ball_radius) return;
    const double m_mu = config.mu > 0.0 ? reward_sup / config.mu : std::numeric_limits<double>::infinity();
    if (*config.ball_radius < std::min(theta_star_norm, m_mu)) {
        throw DomainError("LearnerConfig: M is below min(|theta*|, sup|r|/mu)");
    }
}

/// Regularisation balancing the O(mu) bias against the iterate error for a
/// budget of K updates: K^(-1/6) for the standard TD, K^(-1/4) for the stochastic one.
inline double balanced_mu(long k_budget, TDVariant variant) {
    if (k_budget < 1) throw DomainError("balanced_mu: budget must be >= 1");
    const double exponent = variant == TDVariant::standard ? -1.0 / 6.0 : -0.25;
    return std::pow(static_cast<double>(k_budget), exponent);
}

struct LearnerState {
    Theta theta;
    Theta theta_bar;  // mean of theta_0 .. theta_{k-1}
    long k = 0;
    std::vector<std::pair<long, double>> error_log;

    static LearnerState initial(int d_theta) {
        LearnerState s;
        s.theta = Theta::Zero(d_theta);
        s.theta_bar = Theta::Zero(d_theta);
        return s;
    }

    /// The algorithm's output: theta_bar when averaging, else theta.
    const Theta& estimate(bool averaging) const { return averaging && k > 0 ? theta_bar : theta; }
};

/// Euclidean projection onto the ball of radius M.
inline Theta project_ball(const Theta& theta, double radius) {
    if (!(radius > 0.0)) throw DomainError("project_ball: M must be > 0");
    const double n = theta.norm();
    if (n <= radius) return theta;
    return theta * (radius / n);
}

namespace detail {

/// `direction` may be an expression in state.theta; it is read before theta is written.
template <class Direction>
void finish_step(LearnerState& state, const Direction& direction, double alpha, const LearnerConfig& config) {
    if (config.averaging) {
        state.theta_bar += (state.theta - state.theta_bar) / static_cast<double>(state.k + 1);
    }
    state.theta -= alpha * direction;
    if (config.ball_radius) {
        const double n = state.theta.norm();
        if (n > *config.ball_radius) state.theta *= *config.ball_radius / n;
    }
    if (!state.theta.allFinite() || state.theta.norm() > config.divergence_threshold) {
        throw DivergenceError(state.k, "|theta| exceeded threshold or became non-finite");
    }
    ++state.k;
}

}  // namespace detail

/// theta <- Pi(theta - alpha_k (delta phi(X) + mu theta)) with delta standard or stochastic.
inline void td0_step(LearnerState& state, const Observation& obs, TDWorkspace& ws, const ModelSpec& model,
                     const LearnerConfig& config, TDValue& scratch) {
    ws.evaluate(obs, state.theta, model.rho, model.drift, config.variant, scratch);
    detail::finish_step(state, scratch.delta * ws.phi_x() + config.mu * state.theta, config.lr.at(state.k), config);
}

inline void td0_step(LearnerState& state, const Observation& obs, const FeatureMap& phi, const ModelSpec& model,
                     const LearnerConfig& config) {
    TDWorkspace ws(phi);
    TDValue scratch;
    td0_step(state, obs, ws, model, config, scratch);
}

/// theta <- Pi(theta - (alpha_k / 2) grad_theta(|delta|^2 + mu |theta|^2)) for a precomputed TD.
inline void rg_step(LearnerState& state, const TDValue& td, const LearnerConfig& config) {
    detail::finish_step(state, td.delta * td.grad_theta + config.mu * state.theta, config.lr.at(state.k), config);
}

inline void rg_step(LearnerState& state, const Observation& obs, TDWorkspace& ws, const ModelSpec& model,
                    const LearnerConfig& config, TDValue& scratch) {
    ws.evaluate(obs, state.theta, model.rho, model.drift, config.variant, scratch);
    rg_step(state, scratch, config);
}

/// Points k (number of completed updates) at which the metric is logged.
class LogGrid {
public:
    /// Powers of two plus k_max.
    static LogGrid geometric(long k_max) {
        std::vector<long> pts;
        for (long k = 1; k <= k_max; k *= 2) pts.push_back(k);
        return LogGrid(std::move(pts), k_max);
    }
    /// Powers of two and round(10^(j/8)), plus k_max.
    static LogGrid dense(long k_max) {
        LogGrid g = geometric(k_max);
        for (int j = 0;; ++j) {
            const long k = std::lround(std::pow(10.0, j / 8.0));
            if (k > k_max) break;
            g.points_.push_back(k);
        }
        return LogGrid(std::move(g.points_), k_max);
    }
    /// Every n-th iterate, plus k_max.
    static LogGrid every(long n, long k_max) {
        if (n < 1) throw DomainError("LogGrid: log interval must be >= 1");
        std::vector<long> pts;
        for (long k = n; k <= k_max; k += n) pts.push_back(k);
        return LogGrid(std::move(pts), k_max);
    }

    const std::vector<long>& points() const { return points_; }

private:
    LogGrid(std::vector<long> pts, long k_max) : points_(std::move(pts)) {
        if (k_max >= 1) points_.push_back(k_max);
        std::sort(points_.begin(), points_.end());
        points_.erase(std::unique(points_.begin(), points_.end()), points_.end());
    }

    std::vector<long> points_;
};

struct TrainOptions {
    Schedule dt = Schedule::power(1.0, 0.5);
    ObservationMode mode = ObservationMode::simulator;
    int n_sub = 32;
    std::uint64_t seed = 0;
    std::uint64_t run = 0;
    long k_max = 1000;
    std::optional<LogGrid> grid;  // geometric(k_max) when unset
    StationarySampler::ChainOptions chain{};
};

struct NoObserver {
    void operator()(const LearnerState&) const {}
};

/// Runs k_max updates on observations drawn from `model`.
///
/// `metric(state)` is appended to state.error_log at each grid point;
/// `observer(state)` sees every iterate after its update.
/// Streams: (seed, {run, 0}) for states, (seed, {run, 1}) for transition noise.
template <class Metric, class Observer = NoObserver>
LearnerState train(const ModelSpec& model, const FeatureMap& phi, const LearnerConfig& config,
                   const TrainOptions& options, Metric&& metric, Observer&& observer = {}) {
    config.validate();
    if (options.k_max < 0) throw DomainError("train: k_max must be >= 0");
    if (phi.dim() != model.dim) throw DomainError("train: feature and model dimensions differ");
    const bool simulator_only = config.rg_extension != RGExtension::none;
    if (simulator_only && options.mode != ObservationMode::simulator) {
        throw DomainError("train: RG extensions need simulator observations");
    }

    LearnerState state = LearnerState::initial(phi.size());
    const LogGrid grid = options.grid ? *options.grid : LogGrid::geometric(options.k_max);
    auto next_log = grid.points().begin();

    const RngStream base(options.seed, {options.run});
    RngStream states = base.child(0);
    RngStream noise = base.child(1);
    StationarySampler sampler(model, options.chain);
    TDWorkspace ws(phi);
    TDValue td;

    while (state.k < options.k_max) {
        const long k = state.k;
        const double dt = options.dt.at(k);
        const TorusPoint x = sampler(states);

        if (config.algorithm == Algorithm::td0 || config.rg_extension == RGExtension::none) {
            const Observation obs = options.mode == ObservationMode::simulator
                                        ? simulator_observation(model, x, dt, noise)
                                        : realworld_observation(model, x, dt, options.n_sub, noise);
            if (config.algorithm == Algorithm::td0) {
                td0_step(state, obs, ws, model, config, td);
            } else {
                rg_step(state, obs, ws, model, config, td);
            }
        } else {
            switch (config.rg_extension) {
                case RGExtension::multistep:
                    td = multistep_td(model, x, state.theta, phi, dt, config.rg_count.at(k), noise);
                    break;
                case RGExtension::minibatch:
                    td = minibatch_td(model, x, state.theta, phi, dt, config.rg_count.at(k), noise);
                    break;
                case RGExtension::rademacher: {
                    const StateVec z = draw_noise(NoiseLaw::rademacher, model, state.theta, x, ws, noise);
                    ws.stochastic(simulator_observation(model, x, dt, z), state.theta, model.rho,
                                  model.drift(x), td);
                    break;
                }
                case RGExtension::sigma_schedule: {
                    const double scale = config.sigma_scale.at(k);
                    const StateVec z = draw_gaussian(noise, model.noise_dim);
                    ws.stochastic(simulator_observation(model, x, dt, z, scale), state.theta, model.rho,
                                  model.drift(x), td);
                    break;
                }
                case RGExtension::none:
                    break;
            }
            rg_step(state, td, config);
        }

        observer(std::as_const(state));
        if (next_log != grid.points().end() && *next_log == state.k) {
            state.error_log.emplace_back(state.k, metric(std::as_const(state)));
            ++next_log;
        }
    }
    return state;
}

}  // namespace ctpe
