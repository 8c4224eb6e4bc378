#include "ctpe/stats.hpp"
#include "ctpe/td.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace ctpe;
using Catch::Approx;

namespace {

const BenchmarkModel& bench() {
    static const BenchmarkModel bm(1.0, 0.1);
    return bm;
}

Theta theta_v() { return Theta::Unit(3, 1); }

StateVec noise(double z) {
    StateVec v(1);
    v[0] = z;
    return v;
}

auto drift_of(const ModelSpec& m) {
    return [&m](const TorusPoint& x) { return m.drift(x); };
}

struct Moments {
    Welford standard, stochastic, correction;
};

// Conditional moments of both TDs at x by direct simulation.
Moments sample_at(const TorusPoint& x, const Theta& theta, double dt, long n, RngStream s,
                  NoiseLaw law = NoiseLaw::gaussian) {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    TDWorkspace ws(*phi);
    TDValue std_td, sto_td;
    const StateVec b = bm.spec().drift(x);
    Moments m;
    for (long i = 0; i < n; ++i) {
        const StateVec z = draw_noise(law, bm, theta, x, ws, s);
        const Observation obs = simulator_observation(bm, x, dt, z);
        ws.standard(obs, theta, bm.rho(), std_td);
        ws.stochastic(obs, theta, bm.rho(), b, sto_td);
        m.standard.add(std_td.delta);
        m.stochastic.add(sto_td.delta);
        m.correction.add(sto_td.correction);
    }
    return m;
}

}  // namespace

TEST_CASE("standard TD closed-form cases", "[td]") {
    const auto phi = fourier_features();
    const Observation obs{0.01, TorusPoint(0.1), TorusPoint(0.13), 2.5};
    CHECK(standard_td(obs, Theta::Zero(3), *phi, 1.0).delta == Approx(-2.5).epsilon(1e-14));

    const Observation still{0.02, TorusPoint(0.3), TorusPoint(0.3), 0.0};
    const Theta theta = (Theta(3) << 0.4, -1.2, 0.7).finished();
    const double v = value(theta, *phi, still.x);
    const TDValue td = standard_td(still, theta, *phi, 1.5);
    CHECK(td.delta == Approx(v * (1.0 - std::exp(-1.5 * 0.02)) / 0.02).epsilon(1e-12));
    CHECK(td.correction == 0.0);
    CHECK(td.grad_theta.isApprox(phi->eval(still.x) * (1.0 - std::exp(-1.5 * 0.02)) / 0.02, 1e-12));

    const Observation bad{0.0, TorusPoint(0.1), TorusPoint(0.1), 0.0};
    CHECK_THROWS_AS(standard_td(bad, theta, *phi, 1.0), DomainError);
}

TEST_CASE("correction term examples", "[td]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    const auto b = drift_of(bm);

    const Observation quiet = simulator_observation(bm, TorusPoint(0.2), 0.01, noise(0.0));
    CHECK(correction_term(quiet, theta_v(), *phi, b) == Approx(0.0).margin(1e-15));

    RngStream s(51);
    const Observation noisy = simulator_observation(bm, TorusPoint(0.2), 0.01, s);
    CHECK(correction_term(noisy, Theta::Zero(3), *phi, b) == 0.0);

    const Observation at0 = simulator_observation(bm, TorusPoint(0.0), 0.01, noise(1.0));
    CHECK(correction_term(at0, theta_v(), *phi, b) == Approx(0.198692).epsilon(1e-5));

    // the increment crosses the seam; Z must use the short displacement
    const Observation seam{0.01, TorusPoint(0.49), TorusPoint(-0.49), 0.0};
    const double expected = (0.02 - 0.01 * bm.drift(0.49)) * value_grad_x(theta_v(), *phi, seam.x)[0];
    CHECK(correction_term(seam, theta_v(), *phi, b) == Approx(expected).epsilon(1e-12));
}

TEST_CASE("stochastic TD adds Z/dt to the standard TD", "[td]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    const auto b = drift_of(bm);
    RngStream s(52);
    for (int i = 0; i < 200; ++i) {
        const Theta theta = gaussian(s, 3);
        const Observation obs = simulator_observation(bm, TorusPoint(s.uniform() - 0.5), 0.005, s);
        const TDValue st = standard_td(obs, theta, *phi, bm.rho());
        const TDValue sto = stochastic_td(obs, theta, *phi, bm.rho(), b);
        const double z = correction_term(obs, theta, *phi, b);
        REQUIRE(sto.delta == Approx(st.delta + z / obs.dt).epsilon(1e-12));
        REQUIRE(sto.correction == Approx(z / obs.dt).epsilon(1e-12));
    }
    CHECK(stochastic_td(Observation{0.01, TorusPoint(0.1), TorusPoint(0.2), 1.75}, Theta::Zero(3), *phi, 1.0, b)
              .delta == Approx(-1.75));

    // zero diffusion: the Euler step is exact drift, so Z vanishes
    const ModelSpec still = with_diffusion_scale(bm, 0.0);
    const Observation det = simulator_observation(still, TorusPoint(0.3), 0.01, noise(2.0));
    const TDValue a = standard_td(det, theta_v(), *phi, 1.0);
    const TDValue c = stochastic_td(det, theta_v(), *phi, 1.0, b);
    CHECK(c.delta == Approx(a.delta).margin(1e-12));
}

TEST_CASE("grad_theta matches finite differences of delta", "[td][property]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    const auto b = drift_of(bm);
    RngStream s(53);
    const double h = 1e-4;
    for (int t = 0; t < 100; ++t) {
        const Theta theta = gaussian(s, 3);
        const Observation obs = simulator_observation(bm, TorusPoint(s.uniform() - 0.5), 0.01, s);
        for (TDVariant variant : {TDVariant::standard, TDVariant::stochastic}) {
            TDWorkspace ws(*phi);
            TDValue base, plus, minus;
            ws.evaluate(obs, theta, bm.rho(), b, variant, base);
            for (int i = 0; i < 3; ++i) {
                const Theta e = Theta::Unit(3, i) * h;
                ws.evaluate(obs, theta + e, bm.rho(), b, variant, plus);
                ws.evaluate(obs, theta - e, bm.rho(), b, variant, minus);
                const double fd = (plus.delta - minus.delta) / (2.0 * h);
                REQUIRE(fd == Approx(base.grad_theta[i]).margin(1e-6 * (1.0 + std::abs(fd))));
            }
        }
    }
}

TEST_CASE("conditional means at x = 0.2", "[td]") {
    const double dt = 1e-3;
    const Moments m = sample_at(TorusPoint(0.2), theta_v(), dt, 1000000, RngStream(54));
    // L V = r, so E[delta|x] is an Euler bias of order dt
    CHECK(std::abs(m.standard.mean()) < 10.0 * dt + 4.0 * m.standard.standard_error());
    CHECK(std::abs(m.stochastic.mean()) < 10.0 * dt + 4.0 * m.stochastic.standard_error());
    // simulator observations: E[Z|x] = 0 exactly
    CHECK(std::abs(m.correction.mean()) < 4.0 * m.correction.standard_error());
}

TEST_CASE("standard TD variance grows like 1/dt, stochastic stays bounded", "[td]") {
    const BenchmarkModel& bm = bench();
    const double x = 0.2;
    const double grad = kTwoPi * std::cos(kTwoPi * x);
    const double hess = -kTwoPi * kTwoPi * std::sin(kTwoPi * x);
    const double std_limit = bm.sigma2() * grad * grad;
    // one-dimensional Gaussian noise: Var(s2 hess (xi^2 - 1) / 2) = s2^2 hess^2 / 2
    const double sto_limit = 0.5 * bm.sigma2() * bm.sigma2() * hess * hess;
    double previous_error = 1e300;
    for (double dt : {1e-2, 1e-3, 1e-4}) {
        const Moments m = sample_at(TorusPoint(x), theta_v(), dt, 400000, RngStream(55, {static_cast<std::uint64_t>(1 / dt)}));
        const double err = std::abs(dt * m.standard.variance() - std_limit) / std_limit;
        CHECK(err < previous_error);
        previous_error = err;
        CHECK(m.stochastic.variance() < 2.0 * sto_limit);
        if (dt == 1e-4) {
            CHECK(err < 0.05);
            CHECK(m.stochastic.variance() == Approx(sto_limit).epsilon(0.05));
        }
    }
}

TEST_CASE("rotated Rademacher noise removes the quadratic-form variance", "[td]") {
    const BenchmarkModel& bm = bench();
    const double hess = -kTwoPi * kTwoPi * std::sin(kTwoPi * 0.2);
    const double removed = 0.5 * bm.sigma2() * bm.sigma2() * hess * hess;
    const long n = 400000;
    const Moments g = sample_at(TorusPoint(0.2), theta_v(), 1e-4, n, RngStream(56));
    const Moments r = sample_at(TorusPoint(0.2), theta_v(), 1e-4, n, RngStream(57), NoiseLaw::rademacher);
    const double reduction = g.stochastic.variance() - r.stochastic.variance();
    const double se = std::hypot(g.stochastic.variance_standard_error(), r.stochastic.variance_standard_error());
    CHECK(reduction >= removed - 3.0 * se);
    CHECK(r.stochastic.variance() < 0.01 * removed);
}

TEST_CASE("multi-step and mini-batch aggregates", "[td]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    const TorusPoint x(0.2);

    SECTION("n = 1 and N = 1 reduce to one stochastic TD") {
        RngStream a(58), b(58), c(58);
        const TDValue ms = multistep_td(bm, x, theta_v(), *phi, 1e-3, 1, a);
        const TDValue mb = minibatch_td(bm, x, theta_v(), *phi, 1e-3, 1, b);
        const Observation obs = simulator_observation(bm, x, 1e-3, c);
        const TDValue one = stochastic_td(obs, theta_v(), *phi, bm.rho(), drift_of(bm));
        CHECK(ms.delta == one.delta);
        CHECK(mb.delta == one.delta);
        CHECK(ms.grad_theta.isApprox(one.grad_theta));
    }

    SECTION("constant reward and theta = 0") {
        ModelSpec m = bm.spec();
        m.reward = [](const TorusPoint&) { return 0.8; };
        RngStream s(59);
        CHECK(multistep_td(m, x, Theta::Zero(3), *phi, 1e-3, 7, s).delta == Approx(-0.8));
        CHECK(minibatch_td(m, x, Theta::Zero(3), *phi, 1e-3, 7, s).delta == Approx(-0.8));
    }

    SECTION("errors") {
        RngStream s(60);
        CHECK_THROWS_AS(multistep_td(bm, x, theta_v(), *phi, 1e-3, 0, s), DomainError);
        CHECK_THROWS_AS(minibatch_td(bm, x, theta_v(), *phi, 1e-3, 0, s), DomainError);
    }

    SECTION("variance shrinks like 1/n along a path") {
        const long reps = 100000;
        double base = 0.0;
        for (int n : {1, 4, 16}) {
            RngStream s(61, {static_cast<std::uint64_t>(n)});
            Welford w;
            for (long i = 0; i < reps; ++i) w.add(multistep_td(bm, x, theta_v(), *phi, 1e-4, n, s).delta);
            if (n == 1) base = w.variance();
            CHECK(w.variance() * n == Approx(base).epsilon(0.15));
        }
    }

    SECTION("mini-batch: same mean, variance divided by N") {
        const long reps = 200000;
        RngStream s1(62), s10(63);
        Welford one, ten;
        for (long i = 0; i < reps; ++i) {
            one.add(minibatch_td(bm, x, theta_v(), *phi, 1e-4, 1, s1).delta);
            ten.add(minibatch_td(bm, x, theta_v(), *phi, 1e-4, 10, s10).delta);
        }
        CHECK(10.0 * ten.variance() == Approx(one.variance()).epsilon(0.05));
        CHECK(std::abs(one.mean() - ten.mean()) < 4.0 * std::hypot(one.standard_error(), ten.standard_error()));
    }
}
