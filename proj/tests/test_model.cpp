#include "ctpe/model.hpp"
#include "ctpe/observe.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace ctpe;
using Catch::Approx;

namespace {

// Composite Simpson rule for the density on [-0.5, x].
double cdf_by_quadrature(const BenchmarkModel& bm, double x, int n = 2000) {
    const double a = -0.5;
    const double h = (x - a) / n;
    double s = bm.density(a) + bm.density(x);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * bm.density(a + i * h);
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("benchmark closed forms", "[model]") {
    const BenchmarkModel bm(1.0, 0.1);
    CHECK(bm.density(0.0) == Approx(std::sqrt(3.0)).epsilon(1e-15));
    CHECK(bm.value(0.25) == Approx(1.0).epsilon(1e-15));
    CHECK(bm.drift(0.0) == 0.0);
    CHECK(bm.reward(0.25) == Approx(1.0 + 2.0 * kPi * kPi * 0.1).epsilon(1e-14));
    CHECK(bm.reward(0.25) == Approx(2.97392).margin(1e-5));
    CHECK(bm.reward(0.0) == 0.0);
}

TEST_CASE("benchmark rejects non-positive parameters", "[model]") {
    CHECK_THROWS_AS(BenchmarkModel(0.0, 0.1), DomainError);
    CHECK_THROWS_AS(BenchmarkModel(1.0, -0.1), DomainError);
    CHECK_THROWS_AS(benchmark_model(1.0, 0.0), DomainError);
}

TEST_CASE("generator of a constant field is rho times the constant", "[model]") {
    const BenchmarkModel bm(1.7, 0.3);
    const FunctionField c{[](const TorusPoint&) { return 2.5; },
                          [](const TorusPoint&) { return StateVec(StateVec::Zero(1)); },
                          [](const TorusPoint&) { return StateMat(StateMat::Zero(1, 1)); }};
    for (double x : {-0.4, 0.0, 0.33}) CHECK(generator_apply(bm, c, TorusPoint(x)) == Approx(1.7 * 2.5));
}

TEST_CASE("generator identity L V = r on a 1000-point grid", "[model]") {
    for (const auto& [rho, s2] : std::vector<std::pair<double, double>>{{1.0, 0.1}, {0.5, 1.0}, {3.0, 0.02}}) {
        const BenchmarkModel bm(rho, s2);
        const FunctionField v = bm.value_field();
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const TorusPoint x(-0.5 + i / 1000.0);
            worst = std::max(worst, std::abs(generator_apply(bm, v, x) - bm.reward(x[0])));
        }
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("generator rejects mismatched dimensions", "[model]") {
    const BenchmarkModel bm(1.0, 0.1);
    CHECK_THROWS_AS(generator_apply(bm, bm.value_field(), TorusPoint{0.1, 0.2}), DomainError);
}

TEST_CASE("density integrates to one and is the Gibbs density of U", "[model]") {
    const BenchmarkModel bm(1.0, 0.1);
    CHECK(cdf_by_quadrature(bm, 0.5, 20000) == Approx(1.0).margin(1e-8));
    // m proportional to exp(2U/s2)
    const double ratio0 = bm.density(0.0) / std::exp(2.0 * bm.potential(0.0) / bm.sigma2());
    for (int i = 0; i < 200; ++i) {
        const double x = -0.5 + i / 200.0;
        REQUIRE(bm.density(x) / std::exp(2.0 * bm.potential(x) / bm.sigma2()) ==
                Approx(ratio0).epsilon(1e-8));
    }
}

TEST_CASE("drift is the derivative of the potential to second order", "[model]") {
    const BenchmarkModel bm(1.0, 0.1);
    auto worst = [&](double h) {
        double w = 0.0;
        for (int i = 0; i < 100; ++i) {
            const double x = -0.5 + (i + 0.37) / 100.0;
            const double fd = (bm.potential(x + h) - bm.potential(x - h)) / (2.0 * h);
            w = std::max(w, std::abs(fd - bm.drift(x)));
        }
        return w;
    };
    const double e3 = worst(1e-3);
    const double e4 = worst(1e-4);
    CHECK(e3 < 1e-5);
    // second order: a 10x smaller step cuts the error ~100x
    CHECK(e3 / e4 > 50.0);
}

TEST_CASE("inverse distribution function", "[model]") {
    const BenchmarkModel bm(1.0, 0.1);
    CHECK(benchmark_inverse_cdf(0.5)[0] == Approx(0.0).margin(1e-15));
    CHECK(benchmark_inverse_cdf_real(0.0) == -0.5);
    CHECK(benchmark_inverse_cdf_real(1.0) == 0.5);
    CHECK(benchmark_inverse_cdf(1.0)[0] == -0.5);  // the endpoints are the same torus point
    CHECK_THROWS_AS(benchmark_inverse_cdf(-0.01), DomainError);
    CHECK_THROWS_AS(benchmark_inverse_cdf(1.01), DomainError);

    double prev = -0.5;
    for (int i = 1; i < 1000; ++i) {
        const double z = i / 1000.0;
        const double x = benchmark_inverse_cdf_real(z);
        REQUIRE(x > prev);
        REQUIRE(bm.cdf(x) == Approx(z).margin(1e-12));
        prev = x;
    }
    for (double x : {-0.4, -0.1, 0.0, 0.2, 0.45}) CHECK(bm.cdf(x) == Approx(cdf_by_quadrature(bm, x)).margin(1e-9));
}

TEST_CASE("pushed-forward uniforms follow m (KS distance)", "[model]") {
    const BenchmarkModel bm(1.0, 0.1);
    RngStream s(2);
    const int n = 1000000;
    std::vector<double> xs(n);
    for (double& x : xs) x = benchmark_inverse_cdf_real(s.uniform());
    std::sort(xs.begin(), xs.end());
    // reference CDF by quadrature on a table, interpolated linearly
    const int table = 4000;
    std::vector<double> ref(table + 1, 0.0);
    for (int i = 1; i <= table; ++i) ref[i] = cdf_by_quadrature(bm, -0.5 + static_cast<double>(i) / table, 200);
    double ks = 0.0;
    for (int i = 0; i < n; i += 97) {
        const double x = xs[i];
        const double pos = (x + 0.5) * table;
        const int j = std::min(table - 1, static_cast<int>(pos));
        const double f = ref[j] + (ref[j + 1] - ref[j]) * (pos - j);
        ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
    }
    CHECK(ks < 0.002);
}

TEST_CASE("validate accepts the benchmark and rejects broken specs", "[model]") {
    const BenchmarkModel bm(1.0, 0.1);
    CHECK_NOTHROW(validate(bm));
    ModelSpec broken = bm.spec();
    broken.rho = 0.0;
    CHECK_THROWS_AS(validate(broken), DomainError);
    ModelSpec nan_reward = bm.spec();
    nan_reward.reward = [](const TorusPoint& x) { return x[0] > 0.3 ? std::nan("") : 0.0; };
    CHECK_THROWS_AS(validate(nan_reward), DomainError);
    ModelSpec no_drift = bm.spec();
    no_drift.drift = nullptr;
    CHECK_THROWS_AS(validate(no_drift), DomainError);
}

TEST_CASE("diffusion scaling keeps drift and reward", "[model]") {
    const BenchmarkModel bm(1.0, 0.1);
    const ModelSpec scaled = with_diffusion_scale(bm, 0.5);
    const TorusPoint x(0.17);
    CHECK(scaled.diffusion(x)(0, 0) == Approx(0.5 * bm.sigma()));
    CHECK(scaled.drift(x)[0] == bm.drift(0.17));
    CHECK(scaled.reward(x) == bm.reward(0.17));
}
