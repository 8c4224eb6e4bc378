#pragma once

// Linear value parametrisation v(x, theta) = theta . phi(x) with analytic
// spatial derivatives of the features.

#include "ctpe/core_rand.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <regex>
#include <string>

namespace ctpe {

using Theta = Eigen::VectorXd;

/// Feature vector phi : T^d -> R^{d_theta} with first and second derivatives.
///
/// Outputs are written into caller-owned buffers so that training loops can
/// reuse them. Shapes: eval d_theta; jacobian d_theta x d (row i = grad phi_i);
/// hessian d_theta x d*d (row i = column-major D^2 phi_i).
class FeatureMap {
public:
    virtual ~FeatureMap() = default;

    virtual int dim() const = 0;
    virtual int size() const = 0;
    virtual std::string name() const = 0;

    virtual void eval(const TorusPoint& x, Eigen::Ref<Eigen::VectorXd> out) const = 0;
    virtual void jacobian(const TorusPoint& x, Eigen::Ref<Eigen::MatrixXd> out) const = 0;
    virtual void hessian(const TorusPoint& x, Eigen::Ref<Eigen::MatrixXd> out) const = 0;

    Eigen::VectorXd eval(const TorusPoint& x) const {
        Eigen::VectorXd out(size());
        eval(x, out);
        return out;
    }
    Eigen::MatrixXd jacobian(const TorusPoint& x) const {
        Eigen::MatrixXd out(size(), dim());
        jacobian(x, out);
        return out;
    }
    Eigen::MatrixXd hessian(const TorusPoint& x) const {
        Eigen::MatrixXd out(size(), dim() * dim());
        hessian(x, out);
        return out;
    }
};

/// Additive trigonometric features on T^d up to frequency `order`:
/// 1, then sin(2 pi n x_j), cos(2 pi n x_j) for each coordinate j and n = 1..order.
/// d_theta = 1 + 2 * order * d. TrigFeatures(1, 1) is (1, sin 2 pi x, cos 2 pi x).
class TrigFeatures final : public FeatureMap {
public:
    explicit TrigFeatures(int order, int dim = 1) : order_(order), dim_(dim) {
        if (order < 1) throw DomainError("TrigFeatures: order must be >= 1");
        if (dim < 1 || dim > kMaxStateDim) throw DomainError("TrigFeatures: bad dimension");
    }

    int dim() const override { return dim_; }
    int size() const override { return 1 + 2 * order_ * dim_; }
    int order() const { return order_; }
    std::string name() const override {
        if (order_ == 1 && dim_ == 1) return "fourier3";
        return "trig(order=" + std::to_string(order_) + ")";
    }

    void eval(const TorusPoint& x, Eigen::Ref<Eigen::VectorXd> out) const override {
        check(x, out.size());
        out[0] = 1.0;
        int i = 1;
        for (int j = 0; j < dim_; ++j) {
            for (int n = 1; n <= order_; ++n) {
                const double w = kTwoPi * n;
                out[i++] = std::sin(w * x[j]);
                out[i++] = std::cos(w * x[j]);
            }
        }
    }

    void jacobian(const TorusPoint& x, Eigen::Ref<Eigen::MatrixXd> out) const override {
        check(x, out.rows());
        out.setZero();
        int i = 1;
        for (int j = 0; j < dim_; ++j) {
            for (int n = 1; n <= order_; ++n) {
                const double w = kTwoPi * n;
                out(i++, j) = w * std::cos(w * x[j]);
                out(i++, j) = -w * std::sin(w * x[j]);
            }
        }
    }

    void hessian(const TorusPoint& x, Eigen::Ref<Eigen::MatrixXd> out) const override {
        check(x, out.rows());
        out.setZero();
        int i = 1;
        for (int j = 0; j < dim_; ++j) {
            const int jj = j * dim_ + j;
            for (int n = 1; n <= order_; ++n) {
                const double w = kTwoPi * n;
                out(i++, jj) = -w * w * std::sin(w * x[j]);
                out(i++, jj) = -w * w * std::cos(w * x[j]);
            }
        }
    }

private:
    void check(const TorusPoint& x, Eigen::Index rows) const {
        if (x.dim() != dim_) throw DomainError("TrigFeatures: point dimension mismatch");
        if (rows != size()) throw DomainError("TrigFeatures: output size mismatch");
    }

    int order_;
    int dim_;
};

/// phi(x) = (1, sin 2 pi x, cos 2 pi x).
inline std::shared_ptr<const FeatureMap> fourier_features() {
    return std::make_shared<TrigFeatures>(1, 1);
}

/// Builds a feature family from its config value: `fourier3` or `trig(order=n)`.
inline std::shared_ptr<const FeatureMap> make_features(const std::string& spec, int dim = 1) {
    if (spec == "fourier3") {
        if (dim != 1) throw DomainError("fourier3 features are one-dimensional");
        return fourier_features();
    }
    static const std::regex trig(R"(\s*trig\s*\(\s*(?:order\s*=\s*)?(\d+)\s*\)\s*)");
    std::smatch m;
    if (std::regex_match(spec, m, trig)) {
        return std::make_shared<TrigFeatures>(std::stoi(m[1].str()), dim);
    }
    throw DomainError("unknown feature family '" + spec + "'");
}

inline void require_theta(const Theta& theta, const FeatureMap& phi) {
    if (theta.size() != phi.size()) throw DomainError("theta length does not match d_theta");
}

/// v(x, theta) = theta . phi(x).
inline double value(const Theta& theta, const FeatureMap& phi, const TorusPoint& x) {
    require_theta(theta, phi);
    return theta.dot(phi.eval(x));
}

/// grad_x v = jacobian(x)^T theta.
inline StateVec value_grad_x(const Theta& theta, const FeatureMap& phi, const TorusPoint& x) {
    require_theta(theta, phi);
    StateVec g = phi.jacobian(x).transpose() * theta;
    return g;
}

/// D^2_x v = sum_i theta_i D^2 phi_i.
inline StateMat value_hess_x(const Theta& theta, const FeatureMap& phi, const TorusPoint& x) {
    require_theta(theta, phi);
    const int d = phi.dim();
    const Eigen::VectorXd flat = phi.hessian(x).transpose() * theta;
    StateMat h(d, d);
    for (int c = 0; c < d; ++c) {
        for (int r = 0; r < d; ++r) h(r, c) = flat[c * d + r];
    }
    return h;
}

/// v(., theta) as a ScalarField.
struct LinearValue {
    const FeatureMap* phi;
    Theta theta;

    double value(const TorusPoint& x) const { return ctpe::value(theta, *phi, x); }
    StateVec gradient(const TorusPoint& x) const { return value_grad_x(theta, *phi, x); }
    StateMat hessian(const TorusPoint& x) const { return value_hess_x(theta, *phi, x); }
};

}  // namespace ctpe
