#include "ctpe/learn.hpp"
#include "ctpe/oracle.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace ctpe;
using Catch::Approx;

namespace {

const BenchmarkModel& bench() {
    static const BenchmarkModel bm(1.0, 0.1);
    return bm;
}

auto zero_metric = [](const LearnerState&) { return 0.0; };

}  // namespace

TEST_CASE("projection onto the ball", "[learn]") {
    const Theta small = (Theta(3) << 0.3, 0.4, 0.0).finished();
    CHECK(project_ball(small, 1.0) == small);
    const Theta big = (Theta(3) << 3.0, 4.0, 0.0).finished();
    const Theta p = project_ball(big, 1.0);
    CHECK(p[0] == Approx(0.6));
    CHECK(p[1] == Approx(0.8));
    CHECK(p[2] == 0.0);
    CHECK(project_ball(p, 1.0) == p);
    CHECK_THROWS_AS(project_ball(big, 0.0), DomainError);
}

TEST_CASE("TD(0) step algebra", "[learn]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();

    SECTION("zero TD and zero mu leave theta unchanged") {
        LearnerConfig cfg;
        LearnerState s = LearnerState::initial(3);
        td0_step(s, Observation{0.01, TorusPoint(0.1), TorusPoint(0.12), 0.0}, *phi, bm, cfg);
        CHECK(s.theta == Theta::Zero(3));
        CHECK(s.k == 1);
    }

    SECTION("zero TD: pure shrinkage by 1 - alpha mu") {
        LearnerConfig cfg;
        cfg.mu = 50.0;
        cfg.lr = Schedule::constant(0.01);
        ModelSpec flat = bm.spec();
        flat.reward = [](const TorusPoint&) { return 0.0; };
        flat.drift = [](const TorusPoint&) { return StateVec(StateVec::Zero(1)); };
        // constant v and rho -> 0 make delta vanish when X' = X
        flat.rho = 1e-300;
        LearnerState s = LearnerState::initial(3);
        s.theta = (Theta(3) << 0.7, 0.0, 0.0).finished();
        td0_step(s, Observation{0.01, TorusPoint(0.3), TorusPoint(0.3), 0.0}, *phi, flat, cfg);
        CHECK(s.theta[0] == Approx((1.0 - 0.01 * 50.0) * 0.7).epsilon(1e-12));

        cfg.ball_radius = 0.2;
        s.theta = (Theta(3) << 0.7, 0.0, 0.0).finished();
        td0_step(s, Observation{0.01, TorusPoint(0.3), TorusPoint(0.3), 0.0}, *phi, flat, cfg);
        CHECK(s.theta[0] == Approx(0.2));
    }

    SECTION("general step matches the formula") {
        LearnerConfig cfg;
        cfg.mu = 0.3;
        cfg.lr = Schedule::power(0.5, 1.0);
        cfg.variant = TDVariant::stochastic;
        LearnerState s = LearnerState::initial(3);
        s.theta = (Theta(3) << 0.1, 0.5, -0.2).finished();
        s.k = 3;
        const Observation obs{0.02, TorusPoint(0.15), TorusPoint(0.19), 1.1};
        const TDValue td = stochastic_td(obs, s.theta, *phi, bm.rho(), [&](const TorusPoint& x) {
            return bm.spec().drift(x);
        });
        const Theta expected = s.theta - 0.5 / 4.0 * (td.delta * phi->eval(obs.x) + 0.3 * s.theta);
        td0_step(s, obs, *phi, bm, cfg);
        CHECK(s.theta.isApprox(expected, 1e-13));
        CHECK(s.k == 4);
    }

    SECTION("at theta = V without noise the update is O(dt)") {
        // sigma = 0 and a reward for which V solves rho V - b V' = r
        ModelSpec quiet = with_diffusion_scale(bm, 0.0);
        quiet.reward = [&bm](const TorusPoint& p) {
            return bm.reward(p[0]) + 0.5 * bm.sigma2() * bm.value_hess(p[0]);
        };
        LearnerConfig cfg;
        cfg.lr = Schedule::constant(1.0);
        for (double dt : {1e-2, 1e-3, 1e-4}) {
            LearnerState s = LearnerState::initial(3);
            s.theta = Theta::Unit(3, 1);
            td0_step(s, simulator_observation(quiet, TorusPoint(0.2), dt, StateVec(StateVec::Zero(1))), *phi,
                     quiet, cfg);
            CHECK((s.theta - Theta::Unit(3, 1)).norm() < 100.0 * dt);
        }
    }
}

TEST_CASE("semi-gradient and gradient directions differ on a crafted observation", "[learn]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    const Observation obs{0.05, TorusPoint(0.1), TorusPoint(0.3), 0.4};
    const Theta theta = (Theta(3) << 0.2, -0.3, 0.5).finished();
    LearnerConfig cfg;
    cfg.lr = Schedule::constant(1.0);

    for (TDVariant variant : {TDVariant::standard, TDVariant::stochastic}) {
        cfg.variant = variant;
        TDWorkspace ws(*phi);
        TDValue td;
        ws.evaluate(obs, theta, bm.rho(), bm.spec().drift, variant, td);

        LearnerState a = LearnerState::initial(3);
        a.theta = theta;
        cfg.algorithm = Algorithm::td0;
        td0_step(a, obs, *phi, bm, cfg);
        CHECK((theta - a.theta).isApprox(td.delta * phi->eval(obs.x), 1e-12));

        LearnerState b = LearnerState::initial(3);
        b.theta = theta;
        cfg.algorithm = Algorithm::rg;
        TDValue scratch;
        rg_step(b, obs, ws, bm, cfg, scratch);
        CHECK((theta - b.theta).isApprox(td.delta * td.grad_theta, 1e-12));
        CHECK((a.theta - b.theta).norm() > 1.0);
    }
}

TEST_CASE("training loop bookkeeping", "[learn]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    LearnerConfig cfg;
    cfg.averaging = true;
    cfg.ball_radius = 0.9;
    cfg.mu = 0.5;
    TrainOptions opt;
    opt.k_max = 2000;
    opt.seed = 71;

    std::vector<Theta> history{Theta::Zero(3)};
    std::vector<Theta> bars;
    const LearnerState s = train(bm, *phi, cfg, opt, zero_metric, [&](const LearnerState& st) {
        REQUIRE(st.theta.norm() <= 0.9 + 1e-12);
        bars.push_back(st.theta_bar);
        history.push_back(st.theta);
    });
    REQUIRE(s.k == 2000);
    // theta_bar after update k is the mean of theta_0 .. theta_k-1
    Theta sum = Theta::Zero(3);
    for (std::size_t k = 0; k < bars.size(); ++k) {
        sum += history[k];
        REQUIRE((bars[k] - sum / static_cast<double>(k + 1)).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(s.error_log.size() == LogGrid::geometric(2000).points().size());
}

TEST_CASE("k_max = 0 returns the initial state", "[learn]") {
    const auto phi = fourier_features();
    TrainOptions opt;
    opt.k_max = 0;
    const LearnerState s = train(bench(), *phi, LearnerConfig{}, opt, zero_metric);
    CHECK(s.k == 0);
    CHECK(s.theta == Theta::Zero(3));
    CHECK(s.error_log.empty());
    opt.k_max = -1;
    CHECK_THROWS_AS(train(bench(), *phi, LearnerConfig{}, opt, zero_metric), DomainError);
}

TEST_CASE("runaway learning rates are reported as divergence", "[learn]") {
    const auto phi = fourier_features();
    LearnerConfig cfg;
    cfg.variant = TDVariant::standard;
    cfg.lr = Schedule::constant(50.0);
    TrainOptions opt;
    opt.k_max = 10000;
    opt.dt = Schedule::constant(1e-3);
    CHECK_THROWS_AS(train(bench(), *phi, cfg, opt, zero_metric), DivergenceError);
}

TEST_CASE("configuration validation", "[learn]") {
    LearnerConfig cfg;
    cfg.mu = -1.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = LearnerConfig{};
    cfg.rg_extension = RGExtension::minibatch;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.algorithm = Algorithm::rg;
    CHECK_NOTHROW(cfg.validate());
    cfg.variant = TDVariant::standard;
    CHECK_THROWS_AS(cfg.validate(), DomainError);

    LearnerConfig proj;
    proj.mu = 0.5;
    proj.ball_radius = 0.5;
    CHECK_THROWS_AS(validate_radius(proj, 1.0, 3.0), DomainError);
    proj.ball_radius = 1.0;
    CHECK_NOTHROW(validate_radius(proj, 1.0, 3.0));
}

TEST_CASE("balanced regularisation decays with the budget", "[learn]") {
    CHECK(balanced_mu(1000000, TDVariant::standard) == Approx(0.1));
    CHECK(balanced_mu(10000, TDVariant::stochastic) == Approx(0.1));
    CHECK_THROWS_AS(balanced_mu(0, TDVariant::standard), DomainError);
}

TEST_CASE("log grids", "[learn]") {
    CHECK(LogGrid::geometric(10).points() == std::vector<long>{1, 2, 4, 8, 10});
    CHECK(LogGrid::every(3, 10).points() == std::vector<long>{3, 6, 9, 10});
    const auto dense = LogGrid::dense(100).points();
    CHECK(dense.front() == 1);
    CHECK(dense.back() == 100);
    CHECK(std::is_sorted(dense.begin(), dense.end()));
    CHECK(std::adjacent_find(dense.begin(), dense.end()) == dense.end());
    CHECK(LogGrid::geometric(0).points().empty());
    CHECK_THROWS_AS(LogGrid::every(0, 10), DomainError);
}

TEST_CASE("count schedule", "[learn]") {
    const CountSchedule n{1.0, 0.5};
    CHECK(n.at(0) == 1);
    CHECK(n.at(3) == 2);
    CHECK(n.at(99) == 10);
    CHECK(CountSchedule{0.01, 0.0}.at(5) == 1);
}

TEST_CASE("mu-TD(0) converges to the oracle's regularised limit", "[learn]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    const LimitSolution lim = estimate_limits(bm, *phi, Integrator::quadrature(4096));
    const double mu = 0.5;
    const Theta target = lim.theta_star_mu(mu);
    LearnerConfig cfg;
    cfg.mu = mu;
    cfg.lr = Schedule::power(2.0 / mu, 1.0);
    TrainOptions opt;
    opt.k_max = 200000;
    opt.seed = 72;
    Theta mean = Theta::Zero(3);
    const int seeds = 4;
    for (int r = 0; r < seeds; ++r) {
        opt.run = static_cast<std::uint64_t>(r);
        mean += train(bm, *phi, cfg, opt, zero_metric).theta / seeds;
    }
    CHECK((mean - target).norm() < 0.02);
    CHECK(target[1] == Approx(lim.H(1, 1) / (lim.H(1, 1) + mu)).epsilon(1e-6));
}

TEST_CASE("standard RG with small dt learns only a constant", "[learn]") {
    const BenchmarkModel& bm = bench();
    const auto phi = fourier_features();
    LearnerConfig cfg;
    cfg.algorithm = Algorithm::rg;
    cfg.variant = TDVariant::standard;
    cfg.averaging = true;
    cfg.lr = Schedule::constant(1e-4);
    TrainOptions opt;
    opt.dt = Schedule::constant(1e-3);
    opt.k_max = 100000;
    opt.seed = 73;
    const LearnerState s = train(bm, *phi, cfg, opt, zero_metric);
    // theta* puts weight 1 on sin; the RG limit keeps (almost) nothing off the constant
    CHECK(std::hypot(s.theta_bar[1], s.theta_bar[2]) < 0.1);
}
