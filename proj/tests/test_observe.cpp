#include "ctpe/observe.hpp"
#include "ctpe/stats.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace ctpe;
using Catch::Approx;

namespace {

// dX = dW on the circle, zero reward.
ModelSpec brownian() {
    ModelSpec m;
    m.reward = [](const TorusPoint&) { return 0.0; };
    m.drift = [](const TorusPoint&) { return StateVec(StateVec::Zero(1)); };
    m.diffusion = [](const TorusPoint&) { return StateMat(StateMat::Identity(1, 1)); };
    return m;
}

StateVec unit_noise(double z) {
    StateVec v(1);
    v[0] = z;
    return v;
}

}  // namespace

TEST_CASE("one Euler step", "[observe]") {
    const ModelSpec bw = brownian();
    CHECK(euler_step(bw, TorusPoint(0.0), 1e-3, unit_noise(1.0))[0] == Approx(0.0316228).epsilon(1e-6));
    CHECK(euler_step(bw, TorusPoint(0.49), 1e-2, unit_noise(1.0))[0] == Approx(-0.41).margin(1e-12));
    CHECK_THROWS_AS(euler_step(bw, TorusPoint(0.0), 0.0, unit_noise(1.0)), DomainError);
    CHECK_THROWS_AS(euler_step(bw, TorusPoint(0.0), 1e-3, StateVec(StateVec::Zero(2))), DomainError);

    const BenchmarkModel bm(1.0, 0.1);
    for (double x : {-0.3, 0.1, 0.2}) {
        const double dt = 1e-3;
        CHECK(euler_step(bm, TorusPoint(x), dt, unit_noise(0.0))[0] == Approx(x + dt * bm.drift(x)).margin(1e-15));
    }
}

TEST_CASE("Euler increments have the drift mean and dt sigma^2 variance", "[observe]") {
    const BenchmarkModel bm(1.0, 0.1);
    const TorusPoint x(0.2);
    const double dt = 1e-3;
    RngStream s(41);
    Welford w;
    for (int i = 0; i < 200000; ++i) {
        const Observation o = simulator_observation(bm, x, dt, s);
        w.add(torus_displacement(o.x, o.x_next)[0]);
        REQUIRE(o.reward == bm.reward(0.2));
        REQUIRE(o.dt == dt);
    }
    CHECK(std::abs(w.mean() - dt * bm.drift(0.2)) < 4.0 * w.standard_error());
    CHECK(w.variance() == Approx(dt * 0.1).epsilon(0.01));
}

TEST_CASE("power and constant schedules", "[observe]") {
    const Schedule p = Schedule::power(1.0, 1.0 / 3.0);
    CHECK(p.at(0) == 1.0);
    CHECK(p.at(1) == Approx(std::pow(2.0, -1.0 / 3.0)));
    CHECK(p.at(2) == Approx(std::pow(3.0, -1.0 / 3.0)));
    for (long k = 0; k < 1000; ++k) REQUIRE(p.at(k + 1) <= p.at(k));
    CHECK(Schedule::constant(0.25).at(1000000) == 0.25);
    const Schedule r = Schedule::power(2.0, 1.0).raised(0.5);
    CHECK(r.at(7) == Approx(std::sqrt(2.0 / 8.0)));
    CHECK_THROWS_AS(Schedule::power(1.0, -0.5), DomainError);
    CHECK_THROWS_AS(Schedule::constant(0.0), DomainError);
}

TEST_CASE("real-world observation with one sub-step is a simulator observation", "[observe]") {
    const BenchmarkModel bm(1.0, 0.1);
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        const TorusPoint x(0.01 * i - 0.5);
        const Observation o1 = realworld_observation(bm, x, 0.01, 1, a);
        const Observation o2 = simulator_observation(bm, x, 0.01, b);
        REQUIRE(o1.x_next[0] == o2.x_next[0]);
        REQUIRE(o1.reward == o2.reward);
    }
    CHECK_THROWS_AS(realworld_observation(bm, TorusPoint(0.0), 0.01, 0, a), DomainError);
}

TEST_CASE("real-world reward is the path average", "[observe]") {
    ModelSpec m = brownian();
    m.reward = [](const TorusPoint&) { return 3.5; };
    RngStream s(43);
    for (int n_sub : {1, 4, 32}) CHECK(realworld_observation(m, TorusPoint(0.1), 0.05, n_sub, s).reward == Approx(3.5));

    // n_sub steps of dt/n_sub have total variance dt
    Welford w;
    for (int i = 0; i < 100000; ++i) {
        const Observation o = realworld_observation(m, TorusPoint(0.0), 0.01, 8, s);
        w.add(torus_displacement(o.x, o.x_next)[0]);
    }
    CHECK(w.variance() == Approx(0.01).epsilon(0.02));
}

TEST_CASE("exact invariant sampler matches the density (chi-square)", "[observe]") {
    const BenchmarkModel bm(1.0, 0.1);
    StationarySampler sampler(bm);
    REQUIRE(sampler.exact());
    RngStream s(44);
    const int bins = 50;
    const long n = 1000000;
    std::vector<long> counts(bins, 0);
    Welford sin_mean, cos_mean;
    for (long i = 0; i < n; ++i) {
        const double x = sampler(s)[0];
        ++counts[std::min(bins - 1, static_cast<int>((x + 0.5) * bins))];
        sin_mean.add(std::sin(kTwoPi * x));
        cos_mean.add(std::cos(kTwoPi * x));
    }
    double chi2 = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double p = bm.cdf(-0.5 + (b + 1.0) / bins) - bm.cdf(-0.5 + static_cast<double>(b) / bins);
        chi2 += std::pow(counts[b] - n * p, 2) / (n * p);
    }
    // 49 degrees of freedom; 99.9% quantile is about 85
    CHECK(chi2 < 85.0);
    CHECK(std::abs(sin_mean.mean()) < 4.0 * sin_mean.standard_error());
    CHECK(std::abs(cos_mean.mean() - (2.0 - std::sqrt(3.0))) < 4.0 * cos_mean.standard_error());
}

TEST_CASE("Euler chain fallback approximates the invariant law", "[observe]") {
    const BenchmarkModel bm(1.0, 0.1);
    StationarySampler chain(bm, {100000, 1e-3, 1000}, true);
    REQUIRE_FALSE(chain.exact());
    RngStream s(45);
    const int n = 50000;
    std::vector<double> xs(n);
    for (double& x : xs) x = chain(s)[0];
    std::sort(xs.begin(), xs.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        const double f = bm.cdf(xs[i]);
        ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
    }
    CHECK(ks < 0.01);
    CHECK_THROWS_AS(StationarySampler(bm, {-1, 1e-3, 10}), DomainError);
}

TEST_CASE("stream states are independent draws", "[observe]") {
    const BenchmarkModel bm(1.0, 0.1);
    ObservationStream obs(bm, Schedule::constant(0.01), ObservationMode::simulator, RngStream(47));
    const int n = 100000;
    std::vector<double> xs(n);
    for (double& x : xs) x = obs.next().x[0];
    Welford w;
    for (double x : xs) w.add(x);
    double lag = 0.0;
    for (int i = 0; i + 1 < n; ++i) lag += (xs[i] - w.mean()) * (xs[i + 1] - w.mean());
    CHECK(std::abs(lag / ((n - 1) * w.variance())) < 0.01);
}

TEST_CASE("observation streams share states across identical seeds", "[observe]") {
    const BenchmarkModel bm(1.0, 0.1);
    ObservationStream sim(bm, Schedule::power(1.0, 0.5), ObservationMode::simulator, RngStream(46, {0}));
    ObservationStream real(bm, Schedule::power(1.0, 0.5), ObservationMode::realworld, RngStream(46, {0}), 4);
    for (long k = 0; k < 50; ++k) {
        const Observation a = sim.next();
        const Observation b = real.next();
        REQUIRE(a.x[0] == b.x[0]);
        REQUIRE(a.dt == Approx(std::pow(k + 1.0, -0.5)));
        REQUIRE(b.dt == a.dt);
    }
    CHECK(sim.index() == 50);
}
