// berm: fit value functions and control variates, price, and run the
// cost-versus-RMSE sweeps from a single INI config.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>

#include "berm/artifact.hpp"
#include "berm/config.hpp"
#include "berm/estimators.hpp"
#include "berm/harness.hpp"

namespace fs = std::filesystem;
using namespace berm;

namespace {

struct Options {
    std::string config;
    std::string out = ".";
    unsigned threads = 1;
    std::string estimator = "standard";
};

fs::path out_path(const Options& o, const std::string& name) { return fs::path(o.out) / name; }

void ensure_out_dir(const Options& o) {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    if (ec) throw ArtifactError("cannot create output directory '" + o.out + "': " + ec.message());
}

// A missing input artifact is a usage problem (exit 2); a present but broken one is exit 4.
fs::path require_artifact(const Options& o, const std::string& name, const char* producer) {
    const auto p = out_path(o, name);
    if (!fs::exists(p)) {
        throw ConfigError("missing artifact '" + p.string() + "'; run '" + producer + "' first");
    }
    return p;
}

std::uint64_t training_seed(const Config& c, std::uint64_t which) {
    return derive_seed(c.seed, Purpose::training, which);
}

int cmd_validate(const Options& o) {
    const Config c = load_config(o.config);
    const ModelSpec m = c.model_spec();
    std::printf("config ok: d=%zu J=%zu T=%g strike=%g seed=%llu\n", m.dim(), m.exercise_count(), m.maturity(),
                c.strike, static_cast<unsigned long long>(c.seed));
    return 0;
}

int cmd_fit(const Options& o) {
    const Config c = load_config(o.config);
    ensure_out_dir(o);
    const ModelSpec model = c.model_spec();
    const MaxCallPayoff payoff = c.payoff();
    const std::size_t d = model.dim();

    const StateBasis tv_basis(d, c.fit.tv_degree, c.fit.tv_include_payoff);
    std::printf("lower-bound basis functions: %zu\n", tv_basis.size());
    if (c.fit.tv_degree == 2 && c.fit.tv_include_payoff) {
        const std::size_t expected = (d + 1) * (d + 2) / 2 + 1;
        if (tv_basis.size() != expected) {
            throw NumericalError("basis size " + std::to_string(tv_basis.size()) + " differs from (d+1)(d+2)/2+1 = " +
                                 std::to_string(expected));
        }
        std::printf("  matches (d+1)(d+2)/2+1 = %zu\n", expected);
    }
    const PathBatch training = simulate_paths(model, c.fit.training_paths, training_seed(c, 0), Purpose::training, 0);
    const ValueFunctions vfun = fit_lower_bound_tv(training, payoff, tv_basis);
    for (std::size_t j = 1; j < model.exercise_count(); ++j) {
        const auto& m = vfun.continuation_model(j);
        std::printf("  C_%zu: rank %zu condition %.3g residual rms %.6g%s\n", j, m.rank, m.condition,
                    m.residual_rms, m.ridge ? " (ridge)" : "");
    }
    save_value_functions(vfun, out_path(o, c.output.value_functions));

    const PathBatch cv_training =
        simulate_paths(model, c.fit.cv_training_paths, training_seed(c, 1), Purpose::training, 1);
    const StateBasis cv_basis(d, c.fit.cv_degree, c.fit.cv_include_payoff);
    const CVModel cv = fit_cv_coefficients(cv_training, vfun, cv_basis, payoff, c.fit.cv_blocks, c.fit.cv_selection);
    std::printf("control variate: K=%zu (%zu Hermite functions), Q=%zu, N_r=%zu, F=%.6g\n", cv.truncation(),
                cv.function_count(), cv_basis.size(), c.fit.cv_training_paths, cv.bound());
    save_cv_model(cv, out_path(o, c.output.cv_model));
    std::printf("wrote %s and %s\n", out_path(o, c.output.value_functions).c_str(),
                out_path(o, c.output.cv_model).c_str());
    return 0;
}

int cmd_price(const Options& o) {
    const Config c = load_config(o.config);
    const ModelSpec model = c.model_spec();
    const MaxCallPayoff payoff = c.payoff();
    const ValueFunctions vfun = load_value_functions(require_artifact(o, c.output.value_functions, "fit"));
    if (vfun.exercise_count() != model.exercise_count()) {
        throw ConfigError("value functions were fitted for a different number of exercise dates");
    }
    EstimatorConfig cfg = c.estimator_config(o.threads);
    const RunKey key{c.seed, 0};

    double ref = std::numeric_limits<double>::quiet_NaN();
    if (const auto p = out_path(o, c.output.reference); fs::exists(p)) ref = load_reference(p).value;

    PriceEstimate est;
    RunRecord rec;
    rec.estimator = o.estimator;
    rec.N = cfg.outer_paths;
    rec.N_d = cfg.inner_samples;
    if (o.estimator == "standard") {
        est = estimate_dual_standard(model, payoff, vfun, cfg, key);
    } else if (o.estimator == "eep") {
        est = estimate_eep(model, payoff, vfun, cfg, key);
    } else if (o.estimator == "cv") {
        const CVModel cv = load_cv_model(require_artifact(o, c.output.cv_model, "fit"));
        est = estimate_dual_cv(model, payoff, vfun, cv, cfg, key);
        rec.N_r = cv.training_paths;
        rec.K = cv.truncation();
        rec.Q = cv.basis().size();
    } else if (o.estimator == "multilevel") {
        est = estimate_multilevel(model, payoff, vfun, cfg, key);
        rec.N = cfg.multilevel.outer.front();
        rec.N_d = cfg.multilevel.inner.back();
        rec.levels = cfg.multilevel.levels();
    } else {
        est = estimate_lower_bound(model, vfun, c.estimator.lower_paths, key, o.threads);
        rec.N = c.estimator.lower_paths;
        rec.N_d = 0;
    }
    rec.estimate = est.value;
    rec.ref_value = ref;
    rec.J = model.exercise_count();
    rec.euler_steps = est.cost.euler_steps;
    rec.inner_sims = est.cost.inner_sims;
    rec.regress_flops = est.cost.regress_flops;
    rec.wall_seconds = c.sweep.record_timing ? est.cost.wall_seconds : 0.0;
    rec.seed = c.seed;

    std::printf("%s: %.6f +- %.6f (std error)\n", o.estimator.c_str(), est.value, est.std_error);
    std::printf("cost: euler_steps=%llu inner_sims=%llu regress_flops=%llu wall=%.3fs\n",
                static_cast<unsigned long long>(est.cost.euler_steps),
                static_cast<unsigned long long>(est.cost.inner_sims),
                static_cast<unsigned long long>(est.cost.regress_flops), est.cost.wall_seconds);
    for (std::size_t l = 0; l < est.levels.size(); ++l) {
        const auto& s = est.levels[l];
        std::printf("  level %zu: N=%zu N_d=%zu mean=%.6f var=%.6g\n", l, s.outer, s.inner, s.mean, s.variance);
    }
    ensure_out_dir(o);
    append_csv(rec, out_path(o, c.output.prices));
    return 0;
}

int cmd_reference(const Options& o) {
    const Config c = load_config(o.config);
    ensure_out_dir(o);
    const ModelSpec model = c.model_spec();
    const ValueFunctions vfun = load_value_functions(require_artifact(o, c.output.value_functions, "fit"));
    EstimatorConfig cfg = c.estimator_config(o.threads);
    cfg.outer_paths = c.estimator.reference_outer;
    cfg.inner_samples = c.estimator.reference_inner;
    const ReferencePrice ref =
        compute_reference(model, c.payoff(), vfun, c.estimator.reference_replications, cfg, c.seed);
    std::printf("reference: %.6f +- %.6f (%zu replications, N=%zu, N_d=%zu)\n", ref.value, ref.std_error,
                ref.replications, ref.N, ref.N_d);
    save_reference(ref, out_path(o, c.output.reference));
    return 0;
}

int cmd_sweep(const Options& o) {
    Config c = load_config(o.config);
    ensure_out_dir(o);
    c.sweep.threads = o.threads;
    const ModelSpec model = c.model_spec();
    const ValueFunctions vfun = load_value_functions(require_artifact(o, c.output.value_functions, "fit"));
    const ReferencePrice ref = load_reference(require_artifact(o, c.output.reference, "reference"));

    std::vector<RunRecord> records;
    try {
        run_sweep(c.sweep, model, c.payoff(), vfun, ref.value, c.seed, records, [](const RunRecord& r) {
            std::fprintf(stderr, "%s eps=%g rep=%zu estimate=%.6f\n", r.estimator.c_str(), r.epsilon,
                         r.replication, r.estimate);
        });
    } catch (...) {
        const auto partial = out_path(o, c.output.runs + ".partial");
        write_csv(records, partial);
        std::fprintf(stderr, "sweep aborted after %zu runs; partial results in %s\n", records.size(),
                     partial.c_str());
        throw;
    }
    write_csv(records, out_path(o, c.output.runs));

    std::vector<std::pair<std::string, double>> expected;
    for (const auto& e : c.sweep.estimators) {
        for (int i : c.sweep.exponents(e)) expected.emplace_back(e, std::ldexp(1.0, -i));
    }
    const auto table = estimate_rmse(records, ref.value, expected);
    write_csv(table, out_path(o, c.output.rmse));
    std::vector<RmseRow> fittable;
    for (const auto& e : c.sweep.estimators) {
        if (c.sweep.exponents(e).size() < 2) continue;
        for (const auto& r : table) {
            if (r.estimator == e) fittable.push_back(r);
        }
    }
    const auto slopes = slopes_by_estimator(fittable);
    write_csv(slopes, out_path(o, c.output.slopes));
    for (const auto& r : table) {
        std::printf("%-10s eps=%-9g rmse=%.6g bias=%+.6g cost=%.6g\n", r.estimator.c_str(), r.epsilon, r.rmse, r.bias,
                    r.mean_cost);
    }
    for (const auto& s : slopes) {
        std::printf("slope %-10s %.4f (%zu points)\n", s.estimator.c_str(), s.fit.slope, s.fit.n_points);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual upper bounds for Bermudan max-call options by nested Monte Carlo"};
    app.footer("\n" + config_help() +
               "\nExit codes: 0 ok, 2 config or usage error, 3 numerical failure, 4 artifact or version error.");
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", o.config, "INI config file")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", o.out, "directory for all artifacts and outputs")->capture_default_str();
        sub->add_option("-t,--threads", o.threads, "worker threads (results do not depend on it)")
            ->capture_default_str()
            ->check(CLI::Range(1u, 1024u));
    };
    auto* validate = app.add_subcommand("validate", "check a config file");
    auto* fit = app.add_subcommand("fit", "fit lower-bound value functions and the control variate");
    auto* price = app.add_subcommand("price", "run one estimator and append a row to the prices CSV");
    auto* reference = app.add_subcommand("reference", "average independent standard dual estimates");
    auto* sweep = app.add_subcommand("sweep", "epsilon sweep; writes runs, RMSE and slope CSVs");
    for (auto* s : {validate, fit, price, reference, sweep}) common(s);
    price->add_option("-e,--estimator", o.estimator, "estimator")
        ->check(CLI::IsMember({"standard", "eep", "cv", "multilevel", "lower"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*validate) return cmd_validate(o);
        if (*fit) return cmd_fit(o);
        if (*price) return cmd_price(o);
        if (*reference) return cmd_reference(o);
        return cmd_sweep(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const ArtifactError& e) {
        std::cerr << "artifact error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
