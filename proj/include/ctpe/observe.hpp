#pragma once

// Observation quadruples (dt, X, X', R) from a simulator (one Euler-Maruyama
// step) or from a finely sub-stepped "real-world" trajectory, with X drawn
// i.i.d. from the invariant law.

#include "ctpe/core_rand.hpp"
#include "ctpe/model.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>

namespace ctpe {

struct Observation {
    double dt = 0.0;
    TorusPoint x;
    TorusPoint x_next;
    double reward = 0.0;
};

/// Deterministic positive sequence indexed by k = 0, 1, 2, ...
///   power:    c (k+1)^(-a)
///   constant: c
struct Schedule {
    enum class Family { power, constant };

    Family family = Family::constant;
    double c = 1.0;
    double a = 0.0;

    static Schedule power(double c, double a) { return Schedule{Family::power, c, a}.checked(); }
    static Schedule constant(double c) { return Schedule{Family::constant, c, 0.0}.checked(); }

    double at(long k) const {
        if (family == Family::constant) return c;
        return c * std::pow(static_cast<double>(k) + 1.0, -a);
    }

    /// Schedule of at(k)^p, e.g. dt_k = alpha_k^(1/3).
    Schedule raised(double p) const {
        if (family == Family::constant) return constant(std::pow(c, p));
        return power(std::pow(c, p), a * p);
    }

    std::string describe() const {
        if (family == Family::constant) return "constant(" + std::to_string(c) + ")";
        return "power(" + std::to_string(c) + ", " + std::to_string(a) + ")";
    }

private:
    Schedule checked() const {
        if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("Schedule: c must be > 0");
        if (family == Family::power && (!(a >= 0.0) || !std::isfinite(a))) {
            throw DomainError("Schedule: power exponent must be >= 0 (nonincreasing)");
        }
        return *this;
    }
};

enum class ObservationMode { simulator, realworld };

/// wrap(x + dt b(x) + sqrt(dt) s sigma(x) z), with s = `noise_scale` (1 unless the
/// noise intensity is being scheduled).
inline TorusPoint euler_step(const ModelSpec& model, const TorusPoint& x, double dt,
                             const StateVec& z, double noise_scale = 1.0) {
    if (!(dt > 0.0)) throw DomainError("euler_step: dt must be > 0");
    if (z.size() != model.noise_dim) throw DomainError("euler_step: noise dimension mismatch");
    const StateVec next =
        x.coords() + dt * model.drift(x) + (noise_scale * std::sqrt(dt)) * (model.diffusion(x) * z);
    return TorusPoint(next);
}

inline StateVec draw_gaussian(RngStream& stream, int n) {
    StateVec z(n);
    for (int i = 0; i < n; ++i) z[i] = stream.normal();
    return z;
}

/// X' = S_dt(X, xi) with the given noise, R = r(X).
inline Observation simulator_observation(const ModelSpec& model, const TorusPoint& x, double dt,
                                         const StateVec& z, double noise_scale = 1.0) {
    return Observation{dt, x, euler_step(model, x, dt, z, noise_scale), model.reward(x)};
}

inline Observation simulator_observation(const ModelSpec& model, const TorusPoint& x, double dt,
                                         RngStream& stream) {
    return simulator_observation(model, x, dt, draw_gaussian(stream, model.noise_dim));
}

/// n_sub Euler sub-steps of size dt/n_sub; reward is the left-endpoint Riemann
/// sum of r along the path divided by dt.
inline Observation realworld_observation(const ModelSpec& model, const TorusPoint& x, double dt,
                                         int n_sub, RngStream& stream) {
    if (n_sub < 1) throw DomainError("realworld_observation: n_sub must be >= 1");
    if (!(dt > 0.0)) throw DomainError("realworld_observation: dt must be > 0");
    const double h = dt / n_sub;
    TorusPoint cur = x;
    double reward_sum = 0.0;
    for (int j = 0; j < n_sub; ++j) {
        reward_sum += model.reward(cur);
        cur = euler_step(model, cur, h, draw_gaussian(stream, model.noise_dim));
    }
    return Observation{dt, x, cur, reward_sum / n_sub};
}

/// Draws X from the invariant law: exactly when the model carries a sampler,
/// otherwise from a long Euler chain (burn-in, then `thin` steps between draws).
class StationarySampler {
public:
    struct ChainOptions {
        long burn_in = 100000;
        double dt = 1e-3;
        long thin = 1000;
    };

    explicit StationarySampler(const ModelSpec& model) : StationarySampler(model, ChainOptions{}) {}
    StationarySampler(const ModelSpec& model, ChainOptions options, bool force_chain = false)
        : model_(&model), options_(options), exact_(!force_chain && model.stationary_sampler) {
        if (options_.burn_in < 0 || options_.thin < 1 || !(options_.dt > 0.0)) {
            throw DomainError("StationarySampler: invalid chain options");
        }
    }

    bool exact() const { return exact_; }

    TorusPoint operator()(RngStream& stream) {
        if (exact_) return model_->stationary_sampler(stream);
        if (!state_) {
            StateVec origin = StateVec::Zero(model_->dim);
            state_ = TorusPoint(origin);
            advance(stream, options_.burn_in);
        }
        advance(stream, options_.thin);
        return *state_;
    }

private:
    void advance(RngStream& stream, long steps) {
        for (long i = 0; i < steps; ++i) {
            state_ = euler_step(*model_, *state_, options_.dt,
                                draw_gaussian(stream, model_->noise_dim));
        }
    }

    const ModelSpec* model_;
    ChainOptions options_;
    bool exact_;
    std::optional<TorusPoint> state_;
};

/// One draw from the invariant law (fresh chain for models without a closed form).
inline TorusPoint sample_stationary(const ModelSpec& model, RngStream& stream,
                                    StationarySampler::ChainOptions options = {}) {
    StationarySampler sampler(model, options);
    return sampler(stream);
}

/// The k-th element uses an independent X_k from the invariant law and dt_k from the schedule.
///
/// States and transition noise come from separate child streams, so two
/// observation streams with the same RngStream see the same X sequence.
class ObservationStream {
public:
    ObservationStream(const ModelSpec& model, Schedule dt, ObservationMode mode, const RngStream& stream,
                      int n_sub = 32, StationarySampler::ChainOptions chain = {})
        : model_(&model),
          dt_(dt),
          mode_(mode),
          n_sub_(n_sub),
          sampler_(model, chain),
          states_(stream.child(0)),
          noise_(stream.child(1)) {
        if (n_sub < 1) throw DomainError("ObservationStream: n_sub must be >= 1");
    }

    long index() const { return k_; }

    Observation next() {
        const double dt = dt_.at(k_++);
        const TorusPoint x = sampler_(states_);
        if (mode_ == ObservationMode::simulator) return simulator_observation(*model_, x, dt, noise_);
        return realworld_observation(*model_, x, dt, n_sub_, noise_);
    }

private:
    const ModelSpec* model_;
    Schedule dt_;
    ObservationMode mode_;
    int n_sub_;
    StationarySampler sampler_;
    RngStream states_;
    RngStream noise_;
    long k_ = 0;
};

}  // namespace ctpe
