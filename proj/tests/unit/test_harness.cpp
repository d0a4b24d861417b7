#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "berm/harness.hpp"
#include "toys.hpp"

using namespace berm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("berm_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunRecord record(const std::string& est, double eps, std::size_t rep, double estimate) {
    RunRecord r;
    r.estimator = est;
    r.epsilon = eps;
    r.replication = rep;
    r.estimate = estimate;
    r.euler_steps = 100;
    return r;
}

SweepSpec tiny_sweep() {
    SweepSpec s;
    s.standard_exponents = {2};
    s.cv_exponents = {2};
    s.multilevel_exponents = {2, 3};
    s.replications = 2;
    s.outer_paths = 40;
    s.ml_outer_log2 = 6;
    s.ml_inner_base = 4;
    s.record_timing = false;
    return s;
}

struct Small {
    ModelSpec model = toys::gbm(2, 0.0, 0.02, 0.2, 100.0, 1.0, 3);
    MaxCallPayoff payoff{100.0};
    ValueFunctions vfun =
        fit_lower_bound_tv(simulate_paths(model, 2000, 5, Purpose::training, 0), payoff, StateBasis(2, 2, true));
};

}  // namespace

TEST_CASE("schedules follow the epsilon formulas") {
    SweepSpec s;
    const auto cv = schedule_for(s, "cv", 4, 2);
    CHECK(cv.epsilon == 1.0 / 16);
    CHECK(cv.N == 50000);
    CHECK(cv.N_d == 128);
    CHECK(cv.N_r == 4096);
    CHECK(cv.K == 1);
    CHECK(cv.Q == 4);
    const auto st = schedule_for(s, "standard", 3, 2);
    CHECK(st.N == 50000);
    CHECK(st.N_d == 128);
    const auto ml = schedule_for(s, "multilevel", 4, 2);
    CHECK(ml.levels == 3);
    CHECK(ml.multilevel.inner == std::vector<std::size_t>{48, 192, 768});
    CHECK(ml.multilevel.outer == std::vector<std::size_t>{65536, 32768, 16384});
    CHECK(schedule_for(s, "cv", 2, 5).Q == 7);

    s.scale = 0.1;
    const auto scaled = schedule_for(s, "cv", 4, 2);
    CHECK(scaled.N == 5000);
    CHECK(scaled.N_d == 13);
    CHECK(scaled.N_r == 410);
    CHECK_THROWS_AS(schedule_for(s, "lsm", 2, 2), ConfigError);
}

TEST_CASE("sweep validation") {
    SweepSpec s;
    CHECK_NOTHROW(s.validate(2));
    s.cv_exponents = {2, 4, 3};
    CHECK_THROWS_AS(s.validate(2), ConfigError);
    s = SweepSpec{};
    s.multilevel_exponents = {1, 2};
    CHECK_THROWS_AS(s.validate(2), ConfigError);
    s = SweepSpec{};
    s.scale = 0.001;  // N_r = 1 at eps = 1/4
    CHECK_THROWS_AS(s.validate(2), ConfigError);
}

TEST_CASE("rmse table") {
    SUBCASE("exact estimates give zero") {
        const auto t = estimate_rmse({record("standard", 0.25, 0, 3.0), record("standard", 0.25, 1, 3.0)}, 3.0);
        REQUIRE(t.size() == 1);
        CHECK(t[0].rmse == 0.0);
        CHECK(t[0].n_replications == 2);
        CHECK(t[0].mean_cost == 100.0);
    }
    SUBCASE("ref +- h gives h") {
        const double h = 0.375;
        const auto t = estimate_rmse({record("cv", 0.5, 0, 2.0 + h), record("cv", 0.5, 1, 2.0 - h)}, 2.0);
        CHECK(t[0].rmse == h);
        CHECK(t[0].bias == 0.0);
    }
    SUBCASE("bias-variance decomposition") {
        std::vector<RunRecord> recs;
        const double xs[] = {12.1, 12.9, 12.4, 13.3, 12.05, 12.77};
        for (std::size_t i = 0; i < 6; ++i) recs.push_back(record("standard", 0.125, i, xs[i]));
        const auto t = estimate_rmse(recs, 12.57);
        double mse = 0;
        for (double x : xs) mse += (x - 12.57) * (x - 12.57) / 6;
        CHECK(t[0].rmse == doctest::Approx(std::sqrt(mse)).epsilon(1e-12));
        const double recomposed = t[0].bias * t[0].bias + t[0].stdev * t[0].stdev;
        CHECK(std::abs(recomposed - t[0].rmse * t[0].rmse) <= 1e-12 * mse);
    }
    SUBCASE("missing and thin cells are reported") {
        const std::vector<RunRecord> recs{record("standard", 0.25, 0, 1.0)};
        try {
            estimate_rmse(recs, 1.0, {{"standard", 0.25}, {"cv", 0.25}});
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("cv") != std::string::npos);
            CHECK(msg.find("standard") != std::string::npos);
        }
    }
}

TEST_CASE("log-log slope") {
    std::vector<std::pair<double, double>> pts;
    for (double r : {0.5, 0.25, 0.125, 0.0625, 0.03125}) pts.emplace_back(std::pow(r, -2.0), r);
    CHECK(std::abs(fit_loglog_slope(pts).slope - 2.0) < 1e-12);
    const auto two = fit_loglog_slope({{1.0, 1.0}, {4.0, 0.5}});
    CHECK(two.slope == 2.0);
    CHECK(two.intercept == 0.0);
    CHECK(two.n_points == 2);
    CHECK_THROWS_AS(fit_loglog_slope({{1.0, 1.0}}), ConfigError);
    CHECK_THROWS_AS(fit_loglog_slope({{1.0, 1.0}, {0.0, 0.5}}), ConfigError);
    CHECK_THROWS_AS(fit_loglog_slope({{1.0, -1.0}, {2.0, 0.5}}), ConfigError);

    std::vector<RmseRow> table;
    for (double r : {0.5, 0.25, 0.125}) {
        table.push_back({"cv", r, r, 0, r, std::pow(r, -1.0), 2});
        table.push_back({"standard", r, r, 0, r, std::pow(r, -2.0), 2});
    }
    const auto s = slopes_by_estimator(table);
    REQUIRE(s.size() == 2);
    CHECK(s[0].estimator == "cv");
    CHECK(s[0].fit.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s[1].fit.slope == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("number formatting round-trips bit for bit") {
    for (double v : {0.1, 1.0 / 3.0, 12.57, -2.5e-300, 6.02214076e23, 5e-324, 0.0}) {
        const std::string s = format_double(v);
        CHECK(s.find(',') == std::string::npos);
        CHECK(parse_double(s) == v);
    }
    CHECK(std::isnan(parse_double(format_double(std::nan("")))));
    CHECK_THROWS_AS(parse_double("12,5"), ArtifactError);
}

TEST_CASE("csv files") {
    const auto dir = scratch_dir("csv");
    SUBCASE("empty inputs give header-only files") {
        write_csv(std::vector<RunRecord>{}, dir / "runs.csv");
        write_csv(std::vector<RmseRow>{}, dir / "rmse.csv");
        write_csv(std::vector<SlopeRow>{}, dir / "slopes.csv");
        CHECK(slurp(dir / "runs.csv") == std::string(kRunsHeader) + "\n");
        CHECK(slurp(dir / "rmse.csv") == std::string(kRmseHeader) + "\n");
        CHECK(slurp(dir / "slopes.csv") == std::string(kSlopesHeader) + "\n");
        CHECK(std::string(kRunsHeader) ==
              "estimator,epsilon,replication,estimate,ref_value,N,N_d,N_r,K,Q,J,levels,euler_steps,inner_sims,"
              "regress_flops,wall_seconds,seed");
        CHECK(std::string(kRmseHeader) == "estimator,epsilon,rmse,bias,stdev,mean_cost,n_replications");
        CHECK(std::string(kSlopesHeader) == "estimator,slope,intercept,n_points");
    }
    SUBCASE("round trip") {
        RunRecord a = record("cv", 0.0625, 3, 12.345678901234567);
        a.ref_value = 12.57;
        a.N = 50000;
        a.N_d = 128;
        a.N_r = 4096;
        a.K = 1;
        a.Q = 4;
        a.J = 20;
        a.euler_steps = 129000000;
        a.inner_sims = 128000000;
        a.regress_flops = 2621440;
        a.wall_seconds = 1.0 / 7.0;
        a.seed = 0xfedcba9876543210ULL;
        RunRecord b = record("multilevel", 0.25, 0, -0.1);
        b.levels = 3;
        write_csv({a, b}, dir / "runs.csv");
        CHECK(read_runs_csv(dir / "runs.csv") == std::vector<RunRecord>{a, b});

        append_csv(a, dir / "appended.csv");
        append_csv(b, dir / "appended.csv");
        CHECK(slurp(dir / "appended.csv") == slurp(dir / "runs.csv"));

        const std::vector<RmseRow> rows{{"cv", 0.125, 0.1, -0.02, 0.09797958971132713, 1e9 / 3, 50}};
        write_csv(rows, dir / "rmse.csv");
        const auto back = read_rmse_csv(dir / "rmse.csv");
        REQUIRE(back.size() == 1);
        CHECK(back[0].stdev == rows[0].stdev);
        CHECK(back[0].mean_cost == rows[0].mean_cost);

        const std::vector<SlopeRow> slopes{{"standard", {1.3100000000000001, -2.0 / 3.0, 4}}};
        write_csv(slopes, dir / "slopes.csv");
        const auto sb = read_slopes_csv(dir / "slopes.csv");
        CHECK(sb[0].fit.slope == slopes[0].fit.slope);
        CHECK(sb[0].fit.intercept == slopes[0].fit.intercept);
        CHECK(sb[0].fit.n_points == 4);
    }
    SUBCASE("malformed files") {
        std::ofstream(dir / "bad.csv") << "estimator,epsilon\nstandard,0.25\n";
        CHECK_THROWS_AS(read_runs_csv(dir / "bad.csv"), ArtifactError);
        std::ofstream(dir / "short.csv") << kRmseHeader << "\ncv,0.25,1\n";
        CHECK_THROWS_AS(read_rmse_csv(dir / "short.csv"), ArtifactError);
        CHECK_THROWS_AS(read_slopes_csv(dir / "nope.csv"), ArtifactError);
    }
    fs::remove_all(dir);
}

TEST_CASE("sweeps") {
    const Small s;
    SUBCASE("two replications share a config and differ in seed") {
        SweepSpec sw = tiny_sweep();
        sw.estimators = {"standard"};
        const auto recs = run_sweep(sw, s.model, s.payoff, s.vfun, 12.0, 99);
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].N == recs[1].N);
        CHECK(recs[0].N_d == recs[1].N_d);
        CHECK(recs[0].seed != recs[1].seed);
        CHECK(recs[0].estimate != recs[1].estimate);
        CHECK(recs[0].replication == 0);
        CHECK(recs[1].replication == 1);
    }
    SUBCASE("records match their schedules and ledgers") {
        const SweepSpec sw = tiny_sweep();
        const auto recs = run_sweep(sw, s.model, s.payoff, s.vfun, 12.0, 7);
        CHECK(recs.size() == 2 * (1 + 1 + 2));
        std::set<std::uint64_t> seeds;
        for (const auto& r : recs) {
            seeds.insert(r.seed);
            const int exponent = static_cast<int>(std::lround(-std::log2(r.epsilon)));
            const auto p = schedule_for(sw, r.estimator, exponent, 2);
            CHECK(r.N == p.N);
            CHECK(r.N_d == p.N_d);
            CHECK(r.N_r == p.N_r);
            CHECK(r.K == p.K);
            CHECK(r.Q == p.Q);
            CHECK(r.levels == p.levels);
            CHECK(r.J == 3);
            CHECK(r.wall_seconds == 0.0);
            CHECK(r.seed == run_seed(7, r.estimator, exponent, r.replication));
            if (r.estimator == "multilevel") {
                std::uint64_t inner = 0;
                for (std::size_t l = 0; l < p.levels; ++l) inner += p.multilevel.outer[l] * p.multilevel.inner[l] * 3;
                CHECK(r.inner_sims == inner);
            } else {
                CHECK(r.inner_sims == r.N * r.N_d * r.J);
                CHECK(r.euler_steps == r.N * (r.N_d + 1) * r.J);
            }
            if (r.estimator == "cv") {
                // one regression per date and degree-1 Hermite direction
                CHECK(r.regress_flops == r.J * 2 * r.N_r * r.Q * r.Q);
            } else {
                CHECK(r.regress_flops == 0);
            }
        }
        CHECK(seeds.size() == recs.size());
        const auto table = estimate_rmse(recs, 12.0);
        CHECK(table.size() == 4);
    }
    SUBCASE("identical seeds give byte-identical csv") {
        const auto dir = scratch_dir("determinism");
        SweepSpec sw = tiny_sweep();
        write_csv(run_sweep(sw, s.model, s.payoff, s.vfun, 12.0, 3), dir / "a.csv");
        sw.threads = 3;
        write_csv(run_sweep(sw, s.model, s.payoff, s.vfun, 12.0, 3), dir / "b.csv");
        CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
        write_csv(run_sweep(sw, s.model, s.payoff, s.vfun, 12.0, 4), dir / "c.csv");
        CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));
        fs::remove_all(dir);
    }
    SUBCASE("progress callback sees every record in order") {
        SweepSpec sw = tiny_sweep();
        std::vector<RunRecord> seen, recs;
        run_sweep(sw, s.model, s.payoff, s.vfun, 12.0, 1, recs, [&](const RunRecord& r) { seen.push_back(r); });
        CHECK(seen == recs);
        CHECK(recs.front().estimator == "standard");
        CHECK(recs.back().estimator == "multilevel");
    }
}

TEST_CASE("reference prices") {
    const Small s;
    EstimatorConfig cfg;
    cfg.outer_paths = 30;
    cfg.inner_samples = 30;
    SUBCASE("independent replications differ") {
        const auto ref = compute_reference(s.model, s.payoff, s.vfun, 2, cfg, 11);
        REQUIRE(ref.estimates.size() == 2);
        CHECK(ref.estimates[0] != ref.estimates[1]);
        CHECK(ref.std_error > 0);
        CHECK(ref.value == (ref.estimates[0] + ref.estimates[1]) / 2);
    }
    SUBCASE("zero volatility is deterministic") {
        const auto flat = toys::gbm(2, 0.05, 0.0, 0.0, 100.0, 1.0, 4);
        const ValueFunctions vf = fit_lower_bound_tv(simulate_paths(flat, 50, 1, Purpose::training, 0), s.payoff,
                                                     StateBasis(2, 2, true));
        const auto ref = compute_reference(flat, s.payoff, vf, 3, cfg, 11);
        // v_l is evaluated at the same successor by the outer and every inner
        // step, so Y vanishes and the estimate is max_j g(x_j) = g(x_J).
        const double xJ = 100.0 * std::pow(1 + 0.05 * 0.25, 4);
        CHECK(ref.value == doctest::Approx(xJ - 100.0).epsilon(1e-12));
        CHECK(ref.std_error == 0.0);
    }
    CHECK_THROWS_AS(compute_reference(s.model, s.payoff, s.vfun, 1, cfg, 11), ConfigError);
}
