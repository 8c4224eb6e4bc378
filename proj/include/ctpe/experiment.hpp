#pragma once

// Experiment harness: flat key = value configuration, multi-seed sweeps with
// aggregated error curves, CSV I/O, log-log rate fits and SVG plots.

#include "ctpe/features.hpp"
#include "ctpe/learn.hpp"
#include "ctpe/model.hpp"
#include "ctpe/observe.hpp"
#include "ctpe/oracle.hpp"
#include "ctpe/parallel.hpp"
#include "ctpe/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace ctpe {

/// Malformed configuration, CSV or fit file; the message names the line.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every seed of a sweep diverged.
class AllSeedsDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        throw ParseError(where + ": '" + s + "' is not a number");
    }
    return v;
}

inline long parse_long(const std::string& s, const std::string& where) {
    long exact = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), exact);
    if (res.ec == std::errc{} && res.ptr == s.data() + s.size()) return exact;
    // accept 1e5-style integers as well
    const double v = parse_double(s, where);
    if (!(std::abs(v) < 9e15) || v != std::floor(v)) throw ParseError(where + ": '" + s + "' is not an integer");
    return static_cast<long>(v);
}

inline std::uint64_t parse_seed(const std::string& s, const std::string& where) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ParseError(where + ": '" + s + "' is not an unsigned integer");
    }
    return v;
}

inline bool parse_bool(const std::string& s, const std::string& where) {
    if (s == "true" || s == "on" || s == "1") return true;
    if (s == "false" || s == "off" || s == "0") return false;
    throw ParseError(where + ": '" + s + "' is not a boolean");
}

}  // namespace detail

/// One sweep, fully described by flat dotted keys (see to_text for the list).
struct ExperimentConfig {
    struct ScheduleSpec {
        std::string family = "power";  // power | constant | lr_power (c * alpha_k^a)
        double c = 1.0;
        double a = 0.5;

        bool operator==(const ScheduleSpec&) const = default;
    };

    std::string model = "benchmark";
    double rho = 1.0;
    double sigma2 = 0.1;
    std::string features = "fourier3";

    std::string mode = "simulator";  // simulator | realworld
    ScheduleSpec dt{"power", 1.0, 0.5};
    int n_sub = 32;
    long burn_in = 100000;

    std::string algorithm = "td0";       // td0 | rg
    std::string variant = "stochastic";  // standard | stochastic
    std::string mu = "0";                // number, or balanced (K^-1/6 standard, K^-1/4 stochastic)
    std::string ball_radius = "none";    // number or none
    bool averaging = false;
    ScheduleSpec lr{"power", 2.0, 1.0};
    std::string rg_extension = "none";  // none | multistep | sigma_schedule | minibatch | rademacher
    double rg_count_c = 1.0;
    double rg_count_a = 0.5;
    double rg_sigma_c = 1.0;
    double rg_sigma_a = 0.125;
    double divergence_threshold = 1e8;

    std::string metric = "param_mse";  // param_mse | ell_loss
    std::string reference = "auto";    // auto | theta_star | theta_star_mu | rg | rg_tilde
    std::string oracle = "quadrature";  // quadrature | montecarlo
    long oracle_n = 4096;

    long k_max = 1000;
    long seeds = 1;
    std::uint64_t seed = 0;
    std::string log_every = "geometric";  // geometric | dense | positive integer
    long fit_k_lo = 0;                    // 0: k_max / 100
    long fit_k_hi = 0;                    // 0: k_max

    std::string output_csv;
    std::string output_svg;
    std::string output_fit;

    bool operator==(const ExperimentConfig&) const = default;

    /// Canonical text form; from_text(to_text()) reproduces the config exactly.
    std::string to_text() const {
        std::ostringstream o;
        auto put = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
        auto num = [&](const char* k, double v) { put(k, detail::format_double(v)); };
        put("model", model);
        num("model.rho", rho);
        num("model.sigma2", sigma2);
        put("features", features);
        put("mode", mode);
        put("dt.family", dt.family);
        num("dt.c", dt.c);
        num("dt.a", dt.a);
        put("n_sub", std::to_string(n_sub));
        put("burn_in", std::to_string(burn_in));
        put("algorithm", algorithm);
        put("variant", variant);
        put("mu", mu);
        put("M", ball_radius);
        put("averaging", averaging ? "true" : "false");
        put("lr.family", lr.family);
        num("lr.c", lr.c);
        num("lr.a", lr.a);
        put("rg.extension", rg_extension);
        num("rg.count.c", rg_count_c);
        num("rg.count.a", rg_count_a);
        num("rg.sigma.c", rg_sigma_c);
        num("rg.sigma.a", rg_sigma_a);
        num("divergence_threshold", divergence_threshold);
        put("metric", metric);
        put("reference", reference);
        put("oracle", oracle);
        put("oracle.n", std::to_string(oracle_n));
        put("k_max", std::to_string(k_max));
        put("seeds", std::to_string(seeds));
        put("seed", std::to_string(seed));
        put("log_every", log_every);
        put("fit.k_lo", std::to_string(fit_k_lo));
        put("fit.k_hi", std::to_string(fit_k_hi));
        put("output.csv", output_csv);
        put("output.svg", output_svg);
        put("output.fit", output_fit);
        return o.str();
    }

    /// Parses `key = value` lines; blank lines and `#` comments are ignored.
    /// Unset keys keep their defaults. The result is validated.
    static ExperimentConfig from_text(const std::string& text) {
        ExperimentConfig c;
        std::istringstream in(text);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string t = detail::trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            const std::string where = "line " + std::to_string(line_no);
            if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
            c.set(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)), where);
        }
        c.validate();
        return c;
    }

    static ExperimentConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ParseError("cannot open config '" + path + "'");
        std::ostringstream s;
        s << f.rdbuf();
        return from_text(s.str());
    }

    void set(const std::string& key, const std::string& v, const std::string& where = "config") {
        using namespace detail;
        const std::string at = where + " (" + key + ")";
        if (key == "model") model = v;
        else if (key == "model.rho") rho = parse_double(v, at);
        else if (key == "model.sigma2") sigma2 = parse_double(v, at);
        else if (key == "features") features = v;
        else if (key == "mode") mode = v;
        else if (key == "dt.family") dt.family = v;
        else if (key == "dt.c") dt.c = parse_double(v, at);
        else if (key == "dt.a") dt.a = parse_double(v, at);
        else if (key == "n_sub") n_sub = static_cast<int>(parse_long(v, at));
        else if (key == "burn_in") burn_in = parse_long(v, at);
        else if (key == "algorithm") algorithm = v;
        else if (key == "variant") variant = v;
        else if (key == "mu") mu = v;
        else if (key == "M") ball_radius = v;
        else if (key == "averaging") averaging = parse_bool(v, at);
        else if (key == "lr.family") lr.family = v;
        else if (key == "lr.c") lr.c = parse_double(v, at);
        else if (key == "lr.a") lr.a = parse_double(v, at);
        else if (key == "rg.extension") rg_extension = v;
        else if (key == "rg.count.c") rg_count_c = parse_double(v, at);
        else if (key == "rg.count.a") rg_count_a = parse_double(v, at);
        else if (key == "rg.sigma.c") rg_sigma_c = parse_double(v, at);
        else if (key == "rg.sigma.a") rg_sigma_a = parse_double(v, at);
        else if (key == "divergence_threshold") divergence_threshold = parse_double(v, at);
        else if (key == "metric") metric = v;
        else if (key == "reference") reference = v;
        else if (key == "oracle") oracle = v;
        else if (key == "oracle.n") oracle_n = parse_long(v, at);
        else if (key == "k_max") k_max = parse_long(v, at);
        else if (key == "seeds") seeds = parse_long(v, at);
        else if (key == "seed") seed = parse_seed(v, at);
        else if (key == "log_every") log_every = v;
        else if (key == "fit.k_lo") fit_k_lo = parse_long(v, at);
        else if (key == "fit.k_hi") fit_k_hi = parse_long(v, at);
        else if (key == "output.csv") output_csv = v;
        else if (key == "output.svg") output_svg = v;
        else if (key == "output.fit") output_fit = v;
        else throw ParseError(where + ": unknown key '" + key + "'");
    }

    void validate() const {
        auto one_of = [](const std::string& key, const std::string& v, std::initializer_list<const char*> options) {
            for (const char* o : options) {
                if (v == o) return;
            }
            throw ParseError("config: invalid " + key + " '" + v + "'");
        };
        one_of("model", model, {"benchmark"});
        one_of("mode", mode, {"simulator", "realworld"});
        one_of("dt.family", dt.family, {"power", "constant", "lr_power"});
        one_of("lr.family", lr.family, {"power", "constant"});
        one_of("algorithm", algorithm, {"td0", "rg"});
        one_of("variant", variant, {"standard", "stochastic"});
        one_of("rg.extension", rg_extension, {"none", "multistep", "sigma_schedule", "minibatch", "rademacher"});
        one_of("metric", metric, {"param_mse", "ell_loss"});
        one_of("reference", reference, {"auto", "theta_star", "theta_star_mu", "rg", "rg_tilde"});
        one_of("oracle", oracle, {"quadrature", "montecarlo"});
        if (log_every != "geometric" && log_every != "dense") detail::parse_long(log_every, "config (log_every)");
        if (mu != "balanced") detail::parse_double(mu, "config (mu)");
        if (ball_radius != "none") detail::parse_double(ball_radius, "config (M)");
        if (k_max < 1) throw ParseError("config: k_max must be >= 1");
        if (seeds < 1) throw ParseError("config: seeds must be >= 1");
        if (oracle_n < 2) throw ParseError("config: oracle.n must be >= 2");
        if (fit_k_lo < 0 || fit_k_hi < 0) throw ParseError("config: fit window must be nonnegative");
        (void)make_features(features);
        (void)learner();
        (void)dt_schedule();
    }

    BenchmarkModel build_model() const { return BenchmarkModel(rho, sigma2); }

    Schedule lr_schedule() const {
        return lr.family == "constant" ? Schedule::constant(lr.c) : Schedule::power(lr.c, lr.a);
    }

    Schedule dt_schedule() const {
        if (dt.family == "constant") return Schedule::constant(dt.c);
        if (dt.family == "power") return Schedule::power(dt.c, dt.a);
        const Schedule base = lr_schedule().raised(dt.a);
        return base.family == Schedule::Family::constant ? Schedule::constant(dt.c * base.c)
                                                         : Schedule::power(dt.c * base.c, base.a);
    }

    double mu_value() const {
        if (mu == "balanced") return balanced_mu(k_max, variant == "standard" ? TDVariant::standard : TDVariant::stochastic);
        return detail::parse_double(mu, "config (mu)");
    }

    LearnerConfig learner() const {
        LearnerConfig l;
        l.algorithm = algorithm == "rg" ? Algorithm::rg : Algorithm::td0;
        l.variant = variant == "standard" ? TDVariant::standard : TDVariant::stochastic;
        l.mu = mu_value();
        if (ball_radius != "none") l.ball_radius = detail::parse_double(ball_radius, "config (M)");
        l.averaging = averaging;
        l.lr = lr_schedule();
        if (rg_extension == "multistep") l.rg_extension = RGExtension::multistep;
        else if (rg_extension == "sigma_schedule") l.rg_extension = RGExtension::sigma_schedule;
        else if (rg_extension == "minibatch") l.rg_extension = RGExtension::minibatch;
        else if (rg_extension == "rademacher") l.rg_extension = RGExtension::rademacher;
        l.rg_count = {rg_count_c, rg_count_a};
        l.sigma_scale = Schedule::power(rg_sigma_c, rg_sigma_a);
        l.divergence_threshold = divergence_threshold;
        l.validate();
        return l;
    }

    LogGrid grid() const {
        if (log_every == "geometric") return LogGrid::geometric(k_max);
        if (log_every == "dense") return LogGrid::dense(k_max);
        return LogGrid::every(detail::parse_long(log_every, "config (log_every)"), k_max);
    }

    std::pair<long, long> fit_window() const {
        const long hi = fit_k_hi > 0 ? fit_k_hi : k_max;
        const long lo = fit_k_lo > 0 ? fit_k_lo : std::max(1L, k_max / 100);
        return {lo, hi};
    }

    /// The reference the metric measures against when reference = auto.
    std::string resolved_reference() const {
        if (reference != "auto") return reference;
        if (algorithm == "td0") return "theta_star_mu";
        if (rg_extension == "none") return "rg";
        return "rg_tilde";
    }

    Integrator integrator() const {
        if (oracle == "quadrature") return Integrator::quadrature(oracle_n);
        return Integrator::monte_carlo(oracle_n, RngStream(seed, {0x6f7261636c65ULL}));
    }
};

struct CurveRow {
    long k = 0;
    double metric_mean = 0.0;
    double metric_std = 0.0;
    long n_ok_seeds = 0;
};

inline constexpr const char* kCurveHeader = "k,metric_mean,metric_std,n_ok_seeds";

struct SeedOutcome {
    long index = 0;
    bool diverged = false;
    long diverged_at = -1;
    Theta final_theta;
    std::vector<std::pair<long, double>> log;
};

struct ExperimentResult {
    std::vector<CurveRow> curve;
    std::vector<SeedOutcome> seeds;
    Theta reference;
    std::string reference_name;
    long n_diverged = 0;
};

/// Reference parameter and l-loss matrix for a config.
struct ExperimentOracle {
    Theta reference;
    Eigen::MatrixXd s_ell;
};

inline ExperimentOracle experiment_oracle(const ExperimentConfig& config, const ModelSpec& model,
                                          const FeatureMap& phi) {
    const Integrator integrator = config.integrator();
    ExperimentOracle out;
    const std::string ref = config.resolved_reference();
    const double mu = config.mu_value();
    if (ref == "theta_star" || ref == "theta_star_mu") {
        const LimitSolution limits = estimate_limits(model, phi, integrator);
        out.reference = ref == "theta_star" ? limits.theta_star : limits.theta_star_mu(mu);
    } else {
        const RGLimits rg = rg_limits(model, phi, mu, integrator);
        out.reference = ref == "rg" ? rg.theta : rg.theta_tilde;
    }
    if (config.metric == "ell_loss") out.s_ell = ell_matrix(model, phi, integrator);
    return out;
}

/// Aggregates per-seed logs into rows k, mean, sample std, count (deterministic order).
inline std::vector<CurveRow> aggregate_curve(const std::vector<SeedOutcome>& seeds) {
    std::map<long, Welford> rows;
    for (const SeedOutcome& s : seeds) {
        for (const auto& [k, v] : s.log) {
            if (std::isfinite(v)) rows[k].add(v);
        }
    }
    std::vector<CurveRow> out;
    for (const auto& [k, w] : rows) {
        out.push_back({k, w.mean(), std::sqrt(w.variance()), static_cast<long>(w.count())});
    }
    return out;
}

/// Runs `seeds` independent trainings (seed index = run id of the random stream)
/// on a bounded pool. Diverged seeds keep the values logged before divergence.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const BenchmarkModel bm = config.build_model();
    const ModelSpec& model = bm.spec();
    const auto phi = make_features(config.features, model.dim);
    const LearnerConfig learner = config.learner();
    const ExperimentOracle oracle = experiment_oracle(config, model, *phi);
    if (learner.ball_radius) validate_radius(learner, oracle.reference.norm(), reward_sup(model));

    TrainOptions options;
    options.dt = config.dt_schedule();
    options.mode = config.mode == "realworld" ? ObservationMode::realworld : ObservationMode::simulator;
    options.n_sub = config.n_sub;
    options.seed = config.seed;
    options.k_max = config.k_max;
    options.grid = config.grid();
    options.chain.burn_in = config.burn_in;

    const bool ell = config.metric == "ell_loss";
    ExperimentResult result;
    result.reference = oracle.reference;
    result.reference_name = config.resolved_reference();
    result.seeds.resize(static_cast<std::size_t>(config.seeds));

    parallel_for(result.seeds.size(), [&](std::size_t i) {
        SeedOutcome& out = result.seeds[i];
        out.index = static_cast<long>(i);
        TrainOptions opt = options;
        opt.run = i;
        auto metric = [&](const LearnerState& s) {
            const Theta& est = s.estimate(learner.averaging);
            const double v = ell ? ell_loss(est, oracle.reference, oracle.s_ell)
                                 : (est - oracle.reference).squaredNorm();
            out.log.emplace_back(s.k, v);
            return v;
        };
        try {
            out.final_theta = train(model, *phi, learner, opt, metric).estimate(learner.averaging);
        } catch (const DivergenceError& e) {
            out.diverged = true;
            out.diverged_at = e.k();
        }
    });

    for (const SeedOutcome& s : result.seeds) result.n_diverged += s.diverged ? 1 : 0;
    if (result.n_diverged == config.seeds) {
        throw AllSeedsDiverged("all " + std::to_string(config.seeds) + " seeds diverged");
    }
    result.curve = aggregate_curve(result.seeds);
    return result;
}

inline std::string curve_to_csv(const std::vector<CurveRow>& curve) {
    std::ostringstream o;
    o << kCurveHeader << '\n';
    for (const CurveRow& r : curve) {
        o << r.k << ',' << detail::format_double(r.metric_mean) << ',' << detail::format_double(r.metric_std) << ','
          << r.n_ok_seeds << '\n';
    }
    return o.str();
}

inline std::vector<CurveRow> curve_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header = false;
    std::vector<CurveRow> out;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        if (!header) {
            if (t != kCurveHeader) throw ParseError(where + ": expected header '" + kCurveHeader + "'");
            header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream row(t);
        std::string cell;
        while (std::getline(row, cell, ',')) cells.push_back(detail::trim(cell));
        if (cells.size() != 4) throw ParseError(where + ": expected 4 columns, found " + std::to_string(cells.size()));
        CurveRow r;
        r.k = detail::parse_long(cells[0], where);
        r.metric_mean = detail::parse_double(cells[1], where);
        r.metric_std = detail::parse_double(cells[2], where);
        r.n_ok_seeds = detail::parse_long(cells[3], where);
        if (!out.empty() && r.k <= out.back().k) throw ParseError(where + ": k must be increasing");
        out.push_back(r);
    }
    if (!header) throw ParseError("line 1: missing header");
    if (out.empty()) throw ParseError("no data rows");
    return out;
}

inline std::vector<CurveRow> read_curve(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "'");
    std::ostringstream s;
    s << f.rdbuf();
    return curve_from_csv(s.str());
}

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;  // of log(metric) against log(k), natural logs
    double r_squared = 0.0;
    long k_lo = 0;
    long k_hi = 0;
    long n_points = 0;

    std::string to_text() const {
        std::ostringstream o;
        o << "slope = " << detail::format_double(slope) << '\n'
          << "intercept = " << detail::format_double(intercept) << '\n'
          << "r_squared = " << detail::format_double(r_squared) << '\n'
          << "k_lo = " << k_lo << '\n'
          << "k_hi = " << k_hi << '\n'
          << "n_points = " << n_points << '\n';
        return o.str();
    }

    static RateFit from_text(const std::string& text) {
        RateFit f;
        std::istringstream in(text);
        std::string line;
        int line_no = 0;
        int seen = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            const std::string where = "line " + std::to_string(line_no);
            const auto eq = t.find('=');
            if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
            const std::string k = detail::trim(t.substr(0, eq));
            const std::string v = detail::trim(t.substr(eq + 1));
            if (k == "slope") f.slope = detail::parse_double(v, where);
            else if (k == "intercept") f.intercept = detail::parse_double(v, where);
            else if (k == "r_squared") f.r_squared = detail::parse_double(v, where);
            else if (k == "k_lo") f.k_lo = detail::parse_long(v, where);
            else if (k == "k_hi") f.k_hi = detail::parse_long(v, where);
            else if (k == "n_points") f.n_points = detail::parse_long(v, where);
            else throw ParseError(where + ": unknown key '" + k + "'");
            ++seen;
        }
        if (seen == 0) throw ParseError("fit file has no entries");
        return f;
    }
};

/// Least squares on (log k, log metric_mean) over rows with k_lo <= k <= k_hi.
inline RateFit fit_rate(const std::vector<CurveRow>& curve, long k_lo, long k_hi) {
    std::vector<double> x, y;
    for (const CurveRow& r : curve) {
        if (r.k < k_lo || r.k > k_hi) continue;
        if (!(r.metric_mean > 0.0) || !std::isfinite(r.metric_mean)) {
            throw DomainError("fit_rate: nonpositive metric at k=" + std::to_string(r.k));
        }
        x.push_back(std::log(static_cast<double>(r.k)));
        y.push_back(std::log(r.metric_mean));
    }
    if (x.size() < 5) {
        throw DomainError("fit_rate: need >= 5 logged points in [" + std::to_string(k_lo) + ", " +
                          std::to_string(k_hi) + "], found " + std::to_string(x.size()));
    }
    const LineFit line = least_squares(x, y);
    return {line.slope, line.intercept, line.r_squared, k_lo, k_hi, static_cast<long>(x.size())};
}

/// Log-log SVG of the curve (one marker per row), the fitted line over its
/// window, and a reference power law through the fit's midpoint.
inline std::string plot_svg(const std::vector<CurveRow>& curve, const std::optional<RateFit>& fit,
                            const std::string& title = "") {
    if (curve.empty()) throw DomainError("plot: no data rows");
    std::vector<const CurveRow*> pts;
    for (const CurveRow& r : curve) {
        if (r.metric_mean > 0.0 && std::isfinite(r.metric_mean) && r.k > 0) pts.push_back(&r);
    }
    if (pts.empty()) throw DomainError("plot: no positive values to draw on a log scale");

    constexpr double width = 640, height = 480, left = 80, right = 20, top = 40, bottom = 60;
    double x0 = std::log10(static_cast<double>(pts.front()->k)), x1 = x0;
    double y0 = std::log10(pts.front()->metric_mean), y1 = y0;
    for (const CurveRow* r : pts) {
        x0 = std::min(x0, std::log10(static_cast<double>(r->k)));
        x1 = std::max(x1, std::log10(static_cast<double>(r->k)));
        y0 = std::min(y0, std::log10(r->metric_mean));
        y1 = std::max(y1, std::log10(r->metric_mean));
    }
    x0 = std::floor(x0);
    x1 = std::max(std::ceil(x1), x0 + 1);
    y0 = std::floor(y0);
    y1 = std::max(std::ceil(y1), y0 + 1);
    auto px = [&](double lx) { return left + (lx - x0) / (x1 - x0) * (width - left - right); };
    auto py = [&](double ly) { return height - bottom - (ly - y0) / (y1 - y0) * (height - top - bottom); };

    std::ostringstream o;
    o << std::fixed << std::setprecision(2);
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty()) {
        o << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          << "font-size=\"15\">" << title << "</text>\n";
    }
    o << "<g stroke=\"#ddd\" stroke-width=\"1\">\n";
    for (double e = x0; e <= x1 + 1e-9; e += 1) {
        o << "<line x1=\"" << px(e) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(e) << "\" y2=\"" << py(y1) << "\"/>\n";
    }
    for (double e = y0; e <= y1 + 1e-9; e += 1) {
        o << "<line x1=\"" << px(x0) << "\" y1=\"" << py(e) << "\" x2=\"" << px(x1) << "\" y2=\"" << py(e) << "\"/>\n";
    }
    o << "</g>\n<g font-family=\"sans-serif\" font-size=\"12\">\n";
    for (double e = x0; e <= x1 + 1e-9; e += 1) {
        o << "<text x=\"" << px(e) << "\" y=\"" << py(y0) + 18 << "\" text-anchor=\"middle\">1e"
          << static_cast<int>(e) << "</text>\n";
    }
    for (double e = y0; e <= y1 + 1e-9; e += 1) {
        o << "<text x=\"" << px(x0) - 8 << "\" y=\"" << py(e) + 4 << "\" text-anchor=\"end\">1e"
          << static_cast<int>(e) << "</text>\n";
    }
    o << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 16
      << "\" text-anchor=\"middle\">k</text>\n";
    o << "<text x=\"18\" y=\"" << (top + height - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (top + height - bottom) / 2 << ")\">error</text>\n</g>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width - left - right << "\" height=\""
      << height - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";

    if (fit) {
        // natural-log fit converted to log10 coordinates
        const double c10 = fit->intercept / std::log(10.0);
        const double a = std::log10(static_cast<double>(std::max(1L, fit->k_lo)));
        const double b = std::log10(static_cast<double>(std::max(1L, fit->k_hi)));
        const double mid = 0.5 * (a + b);
        const double mid_y = c10 + fit->slope * mid;
        auto clip_line = [&](double slope, double through_x, double through_y, const char* style) {
            const double ya = through_y + slope * (a - through_x);
            const double yb = through_y + slope * (b - through_x);
            o << "<line x1=\"" << px(a) << "\" y1=\"" << py(ya) << "\" x2=\"" << px(b) << "\" y2=\"" << py(yb)
              << "\" " << style << "/>\n";
        };
        clip_line(fit->slope, mid, mid_y, "stroke=\"#d62728\" stroke-width=\"2\" class=\"fit\"");
        const double guide = std::round(fit->slope * 6.0) / 6.0;  // nearest multiple of 1/6
        clip_line(guide, mid, mid_y + 0.3, "stroke=\"#555\" stroke-dasharray=\"6 4\" class=\"guide\"");
        std::ostringstream label;
        label << std::setprecision(4) << "fitted slope " << fit->slope << ", guide k^" << guide;
        o << "<text x=\"" << width - right - 8 << "\" y=\"" << top + 18
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << label.str() << "</text>\n";
    }

    o << "<g fill=\"#1f77b4\">\n";
    for (const CurveRow* r : pts) {
        o << "<circle class=\"marker\" cx=\"" << px(std::log10(static_cast<double>(r->k))) << "\" cy=\""
          << py(std::log10(r->metric_mean)) << "\" r=\"3\"/>\n";
    }
    o << "</g>\n</svg>\n";
    return o.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << content;
    if (!f) throw std::runtime_error("error writing '" + path + "'");
}

}  // namespace ctpe
