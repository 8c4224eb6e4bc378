#pragma once

// Random streams, noise laws and torus arithmetic shared by every module.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctpe {

/// Thrown on precondition violations (bad dimensions, non-finite inputs, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline constexpr int kMaxStateDim = 8;

/// Small state-space vector; fixed storage so the hot loops never allocate.
using StateVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxStateDim, 1>;
/// d x d_W diffusion matrix or d x d Hessian.
using StateMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                               kMaxStateDim, kMaxStateDim>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.141592653589793238462643383279;

/// Canonical representative of a real number in [-0.5, 0.5).
inline double wrap_scalar(double x) {
    if (!std::isfinite(x)) {
        throw DomainError("wrap: non-finite coordinate");
    }
    double y = x - std::floor(x + 0.5);
    // x + 0.5 can round up to an integer just below the seam.
    if (y < -0.5) y += 1.0;
    if (y >= 0.5) y -= 1.0;
    return y;
}

/// A point of the flat torus R^d / Z^d, stored in canonical coordinates.
class TorusPoint {
public:
    TorusPoint() = default;
    explicit TorusPoint(double x) : coords_(1) { coords_[0] = wrap_scalar(x); }
    explicit TorusPoint(const StateVec& x) : coords_(x.size()) {
        if (x.size() < 1 || x.size() > kMaxStateDim) {
            throw DomainError("TorusPoint: dimension out of range");
        }
        for (Eigen::Index i = 0; i < x.size(); ++i) coords_[i] = wrap_scalar(x[i]);
    }
    TorusPoint(std::initializer_list<double> xs) : TorusPoint(from_list(xs)) {}

    int dim() const { return static_cast<int>(coords_.size()); }
    const StateVec& coords() const { return coords_; }
    double operator[](int i) const { return coords_[i]; }

    bool operator==(const TorusPoint& other) const {
        return coords_.size() == other.coords_.size() && coords_ == other.coords_;
    }

private:
    static StateVec from_list(std::initializer_list<double> xs) {
        StateVec v(static_cast<Eigen::Index>(xs.size()));
        Eigen::Index i = 0;
        for (double x : xs) v[i++] = x;
        return v;
    }

    StateVec coords_;
};

inline TorusPoint wrap(const StateVec& x) { return TorusPoint(x); }
inline TorusPoint wrap(double x) { return TorusPoint(x); }

/// Minimal-magnitude representative of y - x; each component in [-0.5, 0.5).
inline StateVec torus_displacement(const TorusPoint& x, const TorusPoint& y) {
    if (x.dim() != y.dim()) {
        throw DomainError("torus_displacement: dimension mismatch");
    }
    StateVec d(x.dim());
    for (int i = 0; i < x.dim(); ++i) d[i] = wrap_scalar(y[i] - x[i]);
    return d;
}

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_gamma(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    z = (z ^ (z >> 33)) | 1ULL;
    // weak gammas (too few bit transitions) produce visibly correlated output
    if (std::popcount(z ^ (z >> 1)) < 24) z ^= 0xaaaaaaaaaaaaaaaaULL;
    return z;
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

/// Deterministic random stream keyed by (seed, path).
///
/// The path names the consumer, e.g. {run, purpose} or {batch}. Streams with
/// different keys walk disjoint Weyl sequences, so parallel sweeps never share
/// state. Satisfies UniformRandomBitGenerator.
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {})
        : seed_(seed), path_(path) {
        rekey();
    }
    RngStream(std::uint64_t seed, std::span<const std::uint64_t> path)
        : seed_(seed), path_(path.begin(), path.end()) {
        rekey();
    }

    /// Independent stream with `index` appended to the path.
    RngStream child(std::uint64_t index) const {
        std::vector<std::uint64_t> p = path_;
        p.push_back(index);
        return RngStream(seed_, std::span<const std::uint64_t>(p));
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += gamma_;
        return detail::mix64(state_);
    }

    /// Uniform on the open interval (0, 1), 53 bits.
    double uniform() {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() { return normal_(*this); }

    /// Rademacher variate: -1 or +1 with probability 1/2.
    double sign() { return ((*this)() >> 63) ? 1.0 : -1.0; }

    std::uint64_t seed() const { return seed_; }
    const std::vector<std::uint64_t>& path() const { return path_; }

private:
    void rekey() {
        std::uint64_t key = detail::mix64(seed_ + detail::kGolden);
        for (std::uint64_t p : path_) {
            key = detail::mix64(key ^ detail::mix64(p + 0x632be59bd9b4e019ULL));
        }
        state_ = detail::mix64(key);
        gamma_ = detail::mix_gamma(key + detail::kGolden);
        normal_.reset();
    }

    std::uint64_t seed_;
    std::vector<std::uint64_t> path_;
    std::uint64_t state_ = 0;
    std::uint64_t gamma_ = detail::kGolden;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// n i.i.d. standard normal variates.
inline Eigen::VectorXd gaussian(RngStream& stream, int n) {
    if (n < 1) throw DomainError("gaussian: n must be >= 1");
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = stream.normal();
    return z;
}

inline void require_symmetric(const Eigen::Ref<const Eigen::MatrixXd>& a, const char* who) {
    if (a.rows() != a.cols()) {
        throw DomainError(std::string(who) + ": matrix is not square");
    }
    if (!a.allFinite()) {
        throw DomainError(std::string(who) + ": non-finite matrix entry");
    }
    const double scale = 1.0 + a.cwiseAbs().maxCoeff();
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw DomainError(std::string(who) + ": matrix is not symmetric");
    }
}

/// Rademacher noise rotated into the eigenbasis of `hessian`.
///
/// With hessian = V diag(lambda) V^T, returns xi = V zeta for a vector zeta of
/// independent signs. Then xi^T hessian xi = sum(lambda) = tr(hessian) for
/// every draw, which removes the quadratic-form variance from the stochastic TD.
inline StateVec rademacher_rotated(const Eigen::Ref<const Eigen::MatrixXd>& hessian,
                                   RngStream& stream) {
    require_symmetric(hessian, "rademacher_rotated");
    const Eigen::Index n = hessian.rows();
    if (n < 1 || n > kMaxStateDim) throw DomainError("rademacher_rotated: bad dimension");
    StateVec zeta(n);
    for (Eigen::Index i = 0; i < n; ++i) zeta[i] = stream.sign();
    if (n == 1) return zeta;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian);
    StateVec xi = eig.eigenvectors() * zeta;
    return xi;
}

}  // namespace ctpe
