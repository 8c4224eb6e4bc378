// Command-line front end: train, sweep, limits, check, rates, plot.
//
// Exit status: 0 on success, 2 when the only failure is divergence, 1 otherwise.

#include "ctpe/ctpe.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace ctpe;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitDivergence = 2;

std::string format_vector(const Eigen::VectorXd& v) {
    std::string out = "(";
    char buf[32];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.6g", i ? ", " : "", v[i]);
        out += buf;
    }
    return out + ")";
}

void print_matrix(const char* name, const Eigen::MatrixXd& m) {
    std::printf("%s =\n", name);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::printf("  ");
        for (Eigen::Index c = 0; c < m.cols(); ++c) std::printf(" %12.6g", m(r, c));
        std::printf("\n");
    }
}

int cmd_train(const std::string& path) {
    ExperimentConfig config = ExperimentConfig::from_file(path);
    config.seeds = 1;
    const BenchmarkModel bm = config.build_model();
    const auto phi = make_features(config.features);
    const LearnerConfig learner = config.learner();
    const ExperimentOracle oracle = experiment_oracle(config, bm, *phi);

    TrainOptions options;
    options.dt = config.dt_schedule();
    options.mode = config.mode == "realworld" ? ObservationMode::realworld : ObservationMode::simulator;
    options.n_sub = config.n_sub;
    options.seed = config.seed;
    options.k_max = config.k_max;
    options.grid = config.grid();
    options.chain.burn_in = config.burn_in;
    const bool ell = config.metric == "ell_loss";

    std::printf("reference (%s) = %s\n", config.resolved_reference().c_str(), format_vector(oracle.reference).c_str());
    std::printf("%12s %16s\n", "k", config.metric.c_str());
    auto metric = [&](const LearnerState& s) {
        const Theta& est = s.estimate(learner.averaging);
        const double v = ell ? ell_loss(est, oracle.reference, oracle.s_ell) : (est - oracle.reference).squaredNorm();
        std::printf("%12ld %16.8g\n", s.k, v);
        return v;
    };
    const LearnerState state = train(bm, *phi, learner, options, metric);
    std::printf("theta_k = %s\n", format_vector(state.theta).c_str());
    if (learner.averaging) std::printf("theta_bar_k = %s\n", format_vector(state.theta_bar).c_str());
    return kExitOk;
}

std::optional<RateFit> try_fit(const std::vector<CurveRow>& curve, long lo, long hi) {
    try {
        return fit_rate(curve, lo, hi);
    } catch (const DomainError& e) {
        std::fprintf(stderr, "warning: no rate fit: %s\n", e.what());
        return std::nullopt;
    }
}

int cmd_sweep(const std::string& path, const std::string& csv_override) {
    ExperimentConfig config = ExperimentConfig::from_file(path);
    if (!csv_override.empty()) config.output_csv = csv_override;
    const ExperimentResult result = run_experiment(config);
    const std::string csv = curve_to_csv(result.curve);
    if (config.output_csv.empty() || config.output_csv == "-") {
        std::fputs(csv.c_str(), stdout);
    } else {
        write_file(config.output_csv, csv);
        std::fprintf(stderr, "wrote %s (%zu rows)\n", config.output_csv.c_str(), result.curve.size());
    }
    const auto [lo, hi] = config.fit_window();
    const std::optional<RateFit> fit = try_fit(result.curve, lo, hi);
    if (fit) {
        std::fprintf(stderr, "slope %.4f  r^2 %.4f  window [%ld, %ld]  points %ld\n", fit->slope, fit->r_squared,
                     fit->k_lo, fit->k_hi, fit->n_points);
        if (!config.output_fit.empty()) write_file(config.output_fit, fit->to_text());
    }
    if (!config.output_svg.empty()) write_file(config.output_svg, plot_svg(result.curve, fit, config.metric));
    if (result.n_diverged > 0) {
        std::fprintf(stderr, "%ld of %ld seeds diverged:", result.n_diverged, config.seeds);
        for (const SeedOutcome& s : result.seeds) {
            if (s.diverged) std::fprintf(stderr, " seed %ld at k=%ld;", s.index, s.diverged_at);
        }
        std::fprintf(stderr, "\n");
        return kExitDivergence;
    }
    return kExitOk;
}

int cmd_limits(const std::string& path, long n) {
    const ExperimentConfig config = ExperimentConfig::from_file(path);
    const BenchmarkModel bm = config.build_model();
    const auto phi = make_features(config.features);
    const Integrator integrator =
        n > 0 ? Integrator::monte_carlo(n, RngStream(config.seed, {0x6f7261636c65ULL})) : config.integrator();
    const LimitSolution lim = estimate_limits(bm, *phi, integrator);
    std::printf("integration: %s, %ld points\n", integrator.is_quadrature() ? "quadrature" : "monte carlo",
                integrator.size());
    print_matrix("H", lim.H);
    print_matrix("se(H)", lim.se.H);
    std::printf("b = %s\n", format_vector(lim.b_vec).c_str());
    std::printf("theta* = %s  se %s\n", format_vector(lim.theta_star).c_str(),
                format_vector(lim.se.theta_star).c_str());
    const double mu = config.mu_value();
    if (mu > 0.0) std::printf("theta*_mu (mu=%g) = %s\n", mu, format_vector(lim.theta_star_mu(mu)).c_str());
    const TraceReport tr = trace_diagnostics(lim, benchmark_sector_bound(bm));
    std::printf("tr(H H^-T) = %.6g  tr(S) = %.6g\n", tr.trace_h_hinv_t, tr.trace_s);
    std::printf("spectrum(S) = %s\n", format_vector(tr.spectrum_s).c_str());
    std::printf("min Re eig(H) = %.6g  sector ratio = %.6g (%s)\n", tr.min_real_part, tr.sector_ratio.value_or(0.0),
                tr.sector_bound_holds ? "holds" : "violated");
    print_matrix("S_ell", ell_matrix(bm, *phi, integrator));
    const RGLimits rg = rg_limits(bm, *phi, mu, integrator);
    std::printf("argmin F_mu (mu=%g) = %s  se %s\n", mu, format_vector(rg.theta).c_str(),
                format_vector(rg.theta_se).c_str());
    std::printf("argmin F~_mu (mu=%g) = %s  se %s\n", mu, format_vector(rg.theta_tilde).c_str(),
                format_vector(rg.theta_tilde_se).c_str());
    return kExitOk;
}

int cmd_check(const std::string& suite, const std::string& path, long n) {
    const ExperimentConfig config = ExperimentConfig::from_file(path);
    CheckOptions opt;
    opt.seed = config.seed;
    if (n > 0) opt.n = n;
    const CheckReport report = run_check(suite, config, opt);
    std::fputs(report.table().c_str(), stdout);
    return report.passed() ? kExitOk : kExitFailure;
}

int cmd_rates(const std::string& csv, const std::vector<long>& window, const std::string& output) {
    const std::vector<CurveRow> curve = read_curve(csv);
    long lo = curve.front().k, hi = curve.back().k;
    if (window.empty()) {
        lo = std::max(1L, hi / 100);
    } else {
        lo = window[0];
        hi = window[1];
    }
    const RateFit fit = fit_rate(curve, lo, hi);
    std::fputs(fit.to_text().c_str(), stdout);
    if (!output.empty()) write_file(output, fit.to_text());
    return kExitOk;
}

int cmd_plot(const std::string& csv, const std::string& fit_path, std::string output) {
    const std::vector<CurveRow> curve = read_curve(csv);
    std::optional<RateFit> fit;
    if (fit_path == "auto") {
        fit = try_fit(curve, std::max(1L, curve.back().k / 100), curve.back().k);
    } else if (fit_path != "none") {
        std::ifstream f(fit_path);
        if (!f) throw ParseError("cannot open fit file '" + fit_path + "'");
        std::ostringstream s;
        s << f.rdbuf();
        fit = RateFit::from_text(s.str());
    }
    if (output.empty()) output = std::filesystem::path(csv).replace_extension(".svg").string();
    write_file(output, plot_svg(curve, fit, std::filesystem::path(csv).stem().string()));
    std::fprintf(stderr, "wrote %s\n", output.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous-time TD policy evaluation experiments"};
    app.require_subcommand(1);

    std::string config_path, csv_path, fit_path, suite, output;
    std::vector<long> window;
    long n = 0;

    auto* train_cmd = app.add_subcommand("train", "Train one seed and print the metric log");
    train_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

    auto* sweep_cmd = app.add_subcommand("sweep", "Multi-seed sweep; writes the error-curve CSV");
    sweep_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--csv", output, "Override output.csv ('-' for stdout)");

    auto* limits_cmd = app.add_subcommand("limits", "Oracle limits and spectral diagnostics");
    limits_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    limits_cmd->add_option("--n", n, "Monte-Carlo sample size (default: the config's oracle)");

    auto* check_cmd = app.add_subcommand("check", "Run an invariant-check suite");
    check_cmd->add_option("suite", suite, "moments | limits | variances | rg")
        ->required()
        ->check(CLI::IsMember({"moments", "limits", "variances", "rg"}));
    check_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    check_cmd->add_option("--n", n, "Samples per estimate (default 1e6)");

    auto* rates_cmd = app.add_subcommand("rates", "Log-log slope of an error curve");
    rates_cmd->add_option("csv", csv_path, "Curve CSV")->required()->check(CLI::ExistingFile);
    rates_cmd->add_option("--window", window, "k_lo k_hi")->expected(2);
    rates_cmd->add_option("--output", output, "Write the fit to this file");

    auto* plot_cmd = app.add_subcommand("plot", "Write a log-log SVG of an error curve");
    plot_cmd->add_option("csv", csv_path, "Curve CSV")->required()->check(CLI::ExistingFile);
    plot_cmd->add_option("fit", fit_path, "Fit file from `rates --output`, or auto, or none")->required();
    plot_cmd->add_option("-o,--output", output, "SVG path (default: CSV path with .svg)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(config_path);
        if (*sweep_cmd) return cmd_sweep(config_path, output);
        if (*limits_cmd) return cmd_limits(config_path, n);
        if (*check_cmd) return cmd_check(suite, config_path, n);
        if (*rates_cmd) return cmd_rates(csv_path, window, output);
        if (*plot_cmd) return cmd_plot(csv_path, fit_path, output);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDivergence;
    } catch (const AllSeedsDiverged& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitFailure;
}
