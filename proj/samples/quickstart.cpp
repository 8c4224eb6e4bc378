// Trains stochastic TD(0) with averaging on the benchmark and compares the
// averaged iterate with the exact linear-features limit.

#include "ctpe/ctpe.hpp"

#include <cstdio>

int main() {
    using namespace ctpe;
    const BenchmarkModel bm(1.0, 0.1);
    const auto phi = fourier_features();

    const LimitSolution lim = estimate_limits(bm, *phi, Integrator::quadrature(4096));

    LearnerConfig cfg;
    cfg.variant = TDVariant::stochastic;
    cfg.averaging = true;
    cfg.lr = Schedule::constant(0.01);
    TrainOptions opt;
    opt.dt = Schedule::power(1.0, 0.5);
    opt.k_max = 200000;
    opt.seed = 1;

    const Eigen::MatrixXd s_ell = ell_matrix(bm, *phi, Integrator::quadrature(4096));
    const LearnerState s = train(bm, *phi, cfg, opt, [&](const LearnerState& st) {
        return ell_loss(st.theta_bar, lim.theta_star, s_ell);
    });

    std::printf("theta*     = (%.4f, %.4f, %.4f)\n", lim.theta_star[0], lim.theta_star[1], lim.theta_star[2]);
    std::printf("theta_bar  = (%.4f, %.4f, %.4f)\n", s.theta_bar[0], s.theta_bar[1], s.theta_bar[2]);
    std::printf("%-10s %s\n", "k", "l-loss");
    for (const auto& [k, err] : s.error_log) std::printf("%-10ld %.3e\n", k, err);
}
