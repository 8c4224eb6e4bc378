#pragma once

// Diffusion models on the torus: dX = b(X) dt + sigma(X) dW, running reward r,
// discount rate rho, and the generator L v = rho v - tr(sigma sigma^T D^2 v)/2 - b.grad v.

#include "ctpe/core_rand.hpp"

#include <cmath>
#include <concepts>
#include <functional>
#include <memory>
#include <string>

namespace ctpe {

/// Dynamics/reward tuple. Dimension-generic; immutable once built.
struct ModelSpec {
    int dim = 1;
    int noise_dim = 1;
    double rho = 1.0;
    std::function<double(const TorusPoint&)> reward;
    std::function<StateVec(const TorusPoint&)> drift;
    std::function<StateMat(const TorusPoint&)> diffusion;

    // Optional closed forms. When set, sample_stationary draws exactly from m and
    // the oracle may integrate against the density instead of sampling.
    std::function<TorusPoint(RngStream&)> stationary_sampler;
    std::function<double(const TorusPoint&)> stationary_density;
};

/// Checks rho > 0, dimensions, and finiteness on a product grid of `points_per_axis`^d points.
inline void validate(const ModelSpec& model, int points_per_axis = 64) {
    if (!(model.rho > 0.0) || !std::isfinite(model.rho)) {
        throw DomainError("ModelSpec: rho must be finite and > 0");
    }
    if (model.dim < 1 || model.dim > kMaxStateDim || model.noise_dim < 1 ||
        model.noise_dim > kMaxStateDim) {
        throw DomainError("ModelSpec: dimension out of range");
    }
    if (!model.reward || !model.drift || !model.diffusion) {
        throw DomainError("ModelSpec: reward, drift and diffusion are required");
    }
    long total = 1;
    for (int i = 0; i < model.dim; ++i) total *= points_per_axis;
    StateVec x(model.dim);
    for (long idx = 0; idx < total; ++idx) {
        long rest = idx;
        for (int i = 0; i < model.dim; ++i) {
            x[i] = -0.5 + (static_cast<double>(rest % points_per_axis) + 0.5) / points_per_axis;
            rest /= points_per_axis;
        }
        const TorusPoint p(x);
        const StateVec b = model.drift(p);
        const StateMat s = model.diffusion(p);
        if (b.size() != model.dim || s.rows() != model.dim || s.cols() != model.noise_dim) {
            throw DomainError("ModelSpec: drift/diffusion shape does not match dimensions");
        }
        if (!std::isfinite(model.reward(p)) || !b.allFinite() || !s.allFinite()) {
            throw DomainError("ModelSpec: non-finite coefficient on evaluation grid");
        }
    }
}

/// Anything with value, gradient and Hessian in x.
template <class F>
concept ScalarField = requires(const F& f, const TorusPoint& x) {
    { f.value(x) } -> std::convertible_to<double>;
    { f.gradient(x) } -> std::convertible_to<StateVec>;
    { f.hessian(x) } -> std::convertible_to<StateMat>;
};

/// ScalarField from three callables; handy for closed-form test fields.
struct FunctionField {
    std::function<double(const TorusPoint&)> f;
    std::function<StateVec(const TorusPoint&)> grad;
    std::function<StateMat(const TorusPoint&)> hess;

    double value(const TorusPoint& x) const { return f(x); }
    StateVec gradient(const TorusPoint& x) const { return grad(x); }
    StateMat hessian(const TorusPoint& x) const { return hess(x); }
};

/// rho v(x) - tr(sigma sigma^T D^2 v)/2 - b(x).grad v(x).
template <ScalarField F>
double generator_apply(const ModelSpec& model, const F& field, const TorusPoint& x) {
    if (x.dim() != model.dim) throw DomainError("generator_apply: point dimension mismatch");
    const StateVec grad = field.gradient(x);
    const StateMat hess = field.hessian(x);
    if (grad.size() != model.dim || hess.rows() != model.dim || hess.cols() != model.dim) {
        throw DomainError("generator_apply: derivative dimension mismatch");
    }
    const StateMat sigma = model.diffusion(x);
    const StateMat a = sigma * sigma.transpose();
    const double diffusion_term = 0.5 * (a.cwiseProduct(hess)).sum();
    return model.rho * field.value(x) - diffusion_term - model.drift(x).dot(grad);
}

namespace detail {

struct BenchmarkForms {
    double rho;
    double sigma2;

    double potential(double x) const {
        return -0.5 * sigma2 * std::log(2.0 - std::cos(kTwoPi * x));
    }
    double drift(double x) const {
        return -0.5 * sigma2 * kTwoPi * std::sin(kTwoPi * x) / (2.0 - std::cos(kTwoPi * x));
    }
    double reward(double x) const {
        const double c = std::cos(kTwoPi * x);
        return (rho + 4.0 * kPi * kPi * sigma2 / (2.0 - c)) * std::sin(kTwoPi * x);
    }
    double value(double x) const { return std::sin(kTwoPi * x); }
    double value_grad(double x) const { return kTwoPi * std::cos(kTwoPi * x); }
    double value_hess(double x) const { return -kTwoPi * kTwoPi * std::sin(kTwoPi * x); }
    double density(double x) const { return std::sqrt(3.0) / (2.0 - std::cos(kTwoPi * x)); }
};

}  // namespace detail

/// Inverse of the benchmark distribution function, as a real number in [-0.5, 0.5].
inline double benchmark_inverse_cdf_real(double z) {
    if (!(z >= 0.0 && z <= 1.0)) throw DomainError("benchmark_inverse_cdf: z outside [0, 1]");
    if (z == 0.0) return -0.5;
    if (z == 1.0) return 0.5;
    return std::atan(std::tan(kPi * (z - 0.5)) / std::sqrt(3.0)) / kPi;
}

/// Inverse distribution function of m; pushes Uniform(0,1) forward to m.
inline TorusPoint benchmark_inverse_cdf(double z) { return TorusPoint(benchmark_inverse_cdf_real(z)); }

/// One-dimensional Langevin benchmark with closed-form value function.
///
/// U(x) = -(s2/2) ln(2 - cos 2 pi x), b = U', constant sigma = sqrt(s2),
/// r(x) = (rho + 4 pi^2 s2 / (2 - cos 2 pi x)) sin 2 pi x, and then
/// V(x) = sin 2 pi x solves L V = r. The invariant density is
/// m(x) = sqrt(3) / (2 - cos 2 pi x).
class BenchmarkModel {
public:
    BenchmarkModel(double rho, double sigma2) : forms_{rho, sigma2} {
        if (!(rho > 0.0) || !(sigma2 > 0.0) || !std::isfinite(rho) || !std::isfinite(sigma2)) {
            throw DomainError("benchmark_model: rho and sigma2 must be positive");
        }
        build_spec();
    }

    double rho() const { return forms_.rho; }
    double sigma2() const { return forms_.sigma2; }
    double sigma() const { return std::sqrt(forms_.sigma2); }

    double potential(double x) const { return forms_.potential(x); }
    double drift(double x) const { return forms_.drift(x); }
    double reward(double x) const { return forms_.reward(x); }
    double value(double x) const { return forms_.value(x); }
    double value_grad(double x) const { return forms_.value_grad(x); }
    double value_hess(double x) const { return forms_.value_hess(x); }
    double density(double x) const { return forms_.density(x); }

    /// Distribution function of m on [-0.5, 0.5]: 1/2 + arctan(sqrt(3) tan(pi x)) / pi.
    double cdf(double x) const {
        if (x <= -0.5) return 0.0;
        if (x >= 0.5) return 1.0;
        return 0.5 + std::atan(std::sqrt(3.0) * std::tan(kPi * x)) / kPi;
    }

    /// V as a ScalarField (closed-form derivatives).
    FunctionField value_field() const {
        const detail::BenchmarkForms f = forms_;
        return FunctionField{
            [f](const TorusPoint& p) { return f.value(p[0]); },
            [f](const TorusPoint& p) {
                StateVec g(1);
                g[0] = f.value_grad(p[0]);
                return g;
            },
            [f](const TorusPoint& p) {
                StateMat h(1, 1);
                h(0, 0) = f.value_hess(p[0]);
                return h;
            }};
    }

    const ModelSpec& spec() const { return spec_; }
    operator const ModelSpec&() const { return spec_; }

private:
    void build_spec() {
        const detail::BenchmarkForms f = forms_;
        spec_.dim = 1;
        spec_.noise_dim = 1;
        spec_.rho = f.rho;
        spec_.reward = [f](const TorusPoint& p) { return f.reward(p[0]); };
        spec_.drift = [f](const TorusPoint& p) {
            StateVec b(1);
            b[0] = f.drift(p[0]);
            return b;
        };
        spec_.diffusion = [sigma = std::sqrt(f.sigma2)](const TorusPoint&) {
            StateMat s(1, 1);
            s(0, 0) = sigma;
            return s;
        };
        spec_.stationary_sampler = [](RngStream& stream) {
            return benchmark_inverse_cdf(stream.uniform());
        };
        spec_.stationary_density = [f](const TorusPoint& p) { return f.density(p[0]); };
    }

    detail::BenchmarkForms forms_;
    ModelSpec spec_;
};

inline BenchmarkModel benchmark_model(double rho, double sigma2) { return BenchmarkModel(rho, sigma2); }

/// Copy of `model` with the diffusion multiplied by `scale` (vanishing-viscosity schedules).
inline ModelSpec with_diffusion_scale(const ModelSpec& model, double scale) {
    ModelSpec out = model;
    auto base = model.diffusion;
    out.diffusion = [base, scale](const TorusPoint& x) -> StateMat { return scale * base(x); };
    // X keeps being drawn from the base law; only transitions see the scaled noise
    return out;
}

}  // namespace ctpe
