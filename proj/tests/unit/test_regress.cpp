#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "berm/errors.hpp"
#include "berm/regress.hpp"
#include "oracles.hpp"
#include "toys.hpp"

using namespace berm;

namespace {

FeatureMatrix matrix(std::size_t n, std::size_t q, const std::vector<double>& rows) {
    FeatureMatrix X(n, q);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) X(i, j) = rows[i * q + j];
    return X;
}

// Standard error of the fitted value psi(x)'b when targets have variance s2.
double prediction_se(const PathBatch& paths, std::size_t date, const StateBasis& basis, const MaxCallPayoff& g,
                     std::span<const double> x, double s2) {
    const std::size_t q = basis.size();
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(q, q);
    for (std::size_t n = 0; n < paths.size(); ++n) {
        const auto f = basis.eval(g, paths.state(n, date));
        const Eigen::Map<const Eigen::VectorXd> v(f.data(), q);
        xtx += v * v.transpose();
    }
    const auto f = basis.eval(g, x);
    const Eigen::Map<const Eigen::VectorXd> v(f.data(), q);
    return std::sqrt(s2 * v.dot(xtx.ldlt().solve(v)));
}

}  // namespace

TEST_CASE("least squares examples") {
    SUBCASE("exact interpolation") {
        std::mt19937_64 rng(1);
        std::normal_distribution<double> z;
        const std::vector<double> beta{1.5, -2.0, 0.25};
        std::vector<double> rows, y;
        for (int i = 0; i < 30; ++i) {
            const double a = z(rng), b = z(rng);
            rows.insert(rows.end(), {1.0, a, b});
            y.push_back(beta[0] + beta[1] * a + beta[2] * b);
        }
        const auto m = least_squares_fit(matrix(30, 3, rows), y);
        for (int j = 0; j < 3; ++j) CHECK(std::abs(m.coef[j] - beta[j]) <= 1e-9 * std::abs(beta[j]));
        CHECK(m.residual_rms < 1e-12);
        CHECK(m.rank == 3);
    }
    SUBCASE("mean regression") {
        const auto m = least_squares_fit(matrix(3, 1, {1, 1, 1}), std::vector<double>{1, 2, 3});
        CHECK(m.coef[0] == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("normal-equations oracle") {
        std::mt19937_64 rng(7);
        std::normal_distribution<double> z;
        std::vector<double> rows, y;
        for (int i = 0; i < 200; ++i) {
            const double a = z(rng), b = z(rng), c = z(rng);
            rows.insert(rows.end(), {1.0, a, b + 0.3 * a, c});
            y.push_back(0.5 - a + 2 * b + 0.1 * c + z(rng));
        }
        const auto m = least_squares_fit(matrix(200, 4, rows), y);
        const auto ref = oracle::normal_equations(rows, 4, y);
        for (int j = 0; j < 4; ++j) CHECK(std::abs(m.coef[j] - ref[j]) < 1e-8);
        // residuals orthogonal to every column
        for (int j = 0; j < 4; ++j) {
            double ip = 0, scale = 0;
            for (int i = 0; i < 200; ++i) {
                double r = y[i];
                for (int k = 0; k < 4; ++k) r -= m.coef[k] * rows[i * 4 + k];
                ip += r * rows[i * 4 + j];
                scale += std::abs(y[i] * rows[i * 4 + j]);
            }
            CHECK(std::abs(ip) < 1e-8 * scale);
        }
    }
}

TEST_CASE("least squares degenerate inputs") {
    CHECK_THROWS_AS(least_squares_fit(matrix(2, 3, {1, 2, 3, 4, 5, 6}), std::vector<double>{1, 2}), ConfigError);
    CHECK_THROWS_AS(least_squares_fit(matrix(3, 2, {0, 0, 0, 0, 0, 0}), std::vector<double>{1, 2, 3}),
                    NumericalError);
    // a zero column gets a zero coefficient
    const auto z = least_squares_fit(matrix(3, 2, {1, 0, 1, 0, 1, 0}), std::vector<double>{1, 2, 3});
    CHECK(z.coef[1] == 0.0);
    CHECK(z.coef[0] == doctest::Approx(2.0));
    // duplicated column: minimum-norm solution splits the weight
    const auto d = least_squares_fit(matrix(3, 2, {1, 1, 2, 2, 3, 3}), std::vector<double>{2, 4, 6});
    CHECK(d.rank == 1);
    CHECK(d.coef[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.coef[1] == doctest::Approx(1.0).epsilon(1e-12));
    // nearly collinear: full rank but condition above the ridge threshold
    std::vector<double> rows, y;
    for (int i = 0; i < 50; ++i) {
        const double t = 1.0 + 0.01 * i;
        rows.insert(rows.end(), {t, t * (1.0 + 1e-14 * ((i * 7919) % 13 - 6))});
        y.push_back(3.0 * t);
    }
    const auto r = least_squares_fit(matrix(50, 2, rows), y);
    if (r.rank == 2) {
        CHECK(r.ridge);
        CHECK(r.coef[0] + r.coef[1] == doctest::Approx(3.0).epsilon(1e-6));
    }
}

TEST_CASE("multi-target fit equals separate fits") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    FeatureMatrix X(40, 3);
    Eigen::MatrixXd Y(40, 2);
    for (int i = 0; i < 40; ++i) {
        X.row(i) << 1.0, z(rng), z(rng);
        Y(i, 0) = z(rng);
        Y(i, 1) = z(rng);
    }
    const auto both = least_squares_fit(X, Y);
    for (int t = 0; t < 2; ++t) {
        std::vector<double> y(40);
        for (int i = 0; i < 40; ++i) y[i] = Y(i, t);
        const auto one = least_squares_fit(X, y);
        for (int j = 0; j < 3; ++j) CHECK(both[t].coef[j] == doctest::Approx(one.coef[j]).epsilon(1e-12));
    }
}

TEST_CASE("Tsitsiklis-Van Roy fit") {
    const MaxCallPayoff g{100.0};
    SUBCASE("single date needs no regression") {
        const auto m = toys::gbm(2, 0.0, 0.02, 0.2, 100.0, 1.0, 1);
        const auto paths = simulate_paths(m, 10, 1, Purpose::training, 0);
        const auto v = fit_lower_bound_tv(paths, g, StateBasis(2, 2, true));
        CHECK(v.continuation_models().empty());
        const std::vector<double> x{120.0, 80.0};
        CHECK(v.value(1, x) == 20.0);
    }
    SUBCASE("constant basis gives the sample mean") {
        const auto m = toys::gbm(2, 0.0, 0.02, 0.2, 100.0, 1.0, 2);
        const auto paths = simulate_paths(m, 500, 2, Purpose::training, 0);
        const auto v = fit_lower_bound_tv(paths, g, StateBasis(2, 0, false));
        double mean = 0;
        for (std::size_t n = 0; n < 500; ++n) mean += g(paths.state(n, 2));
        mean /= 500;
        CHECK(v.continuation_model(1).coef[0] == doctest::Approx(mean).epsilon(1e-12));
    }
    SUBCASE("structure of the fitted value functions") {
        const auto m = toys::max_call_2d();
        const auto paths = simulate_paths(m, 5000, 3, Purpose::training, 0);
        const StateBasis basis(2, 2, true);
        REQUIRE(basis.size() == 7);
        const auto v = fit_lower_bound_tv(paths, g, basis);
        for (std::size_t n = 0; n < 200; ++n) {
            for (std::size_t j = 1; j <= 20; ++j) {
                const auto x = paths.state(n, j);
                const double val = v.value(j, x);
                CHECK(val >= g(x));
                CHECK(std::abs(val) <= v.bound(j));
                if (j == 20) CHECK(val == g(x));
                else CHECK(val == std::max(g(x), v.continuation(j, x)));
            }
        }
    }
}

TEST_CASE("control-variate fit for a constant value function is zero") {
    const auto m = toys::gbm(1, 0.0, 0.02, 0.2, 100.0, 1.0, 3);
    const auto paths = simulate_paths(m, 4000, 5, Purpose::training, 0);
    const MaxCallPayoff g{100.0};
    const StateBasis basis(1, 1, true);
    const toys::Scalar constant{[](double) { return 7.0; }};
    const auto cv = fit_cv_coefficients(paths, constant, basis, g, 1);
    CHECK(cv.bound() == doctest::Approx(7.7));
    std::vector<double> a(1);
    for (std::size_t l = 2; l <= 3; ++l) {
        const auto x = paths.state(11, l - 1);
        cv.coefficients(l, x, a);
        CHECK(std::abs(a[0]) < 3 * prediction_se(paths, l - 1, basis, g, x, 49.0));
    }
}

TEST_CASE("coefficients of a linear value function vanish beyond block 1") {
    const auto m = toys::gbm(1, 0.0, 0.02, 0.2, 100.0, 2.0, 2);
    const std::size_t n = 20000;
    const auto paths = simulate_paths(m, n, 6, Purpose::training, 0);
    const MaxCallPayoff g{100.0};
    const StateBasis basis(1, 1, false);
    const toys::Scalar linear{[](double y) { return y; }};
    const auto cv = fit_cv_coefficients(paths, linear, basis, g, 3);
    REQUIRE(cv.function_count() == 3);
    std::vector<double> a(3);
    double rms1 = 0, rms2 = 0, rms3 = 0, rel = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto x = paths.state(k, 1);
        cv.coefficients(2, x, a);
        const double exact = m.diffusion_scale(0) * x[0];
        rms1 += (a[0] - exact) * (a[0] - exact);
        rel += exact * exact;
        rms2 += a[1] * a[1];
        rms3 += a[2] * a[2];
    }
    // fit noise is about (c / s) sqrt(2 / n) = 5% of the signal
    CHECK(std::sqrt(rms1 / rel) < 0.15);
    CHECK(std::sqrt(rms2 / rel) < 0.15);
    CHECK(std::sqrt(rms3 / rel) < 0.15);
}

TEST_CASE("truncation and cv_eval") {
    const auto model = toys::max_call_2d();
    const MaxCallPayoff g{100.0};
    const auto paths = simulate_paths(model, 3000, 9, Purpose::training, 0);
    const auto v = fit_lower_bound_tv(paths, g, StateBasis(2, 2, true));
    const auto cvpaths = simulate_paths(model, 2000, 10, Purpose::training, 1);
    const auto cv = fit_cv_coefficients(cvpaths, v, StateBasis(2, 1, true), g, 1);
    std::vector<double> a(cv.function_count());
    for (double far : {1e3, 1e6, -1e6}) {
        cv.coefficients(5, std::vector<double>{far, 100.0}, a);
        for (double c : a) CHECK(std::abs(c) <= cv.bound());
    }

    const auto empty = CVModel::empty(2, 2, 20, g);
    CHECK(cv_eval(empty, 3, std::vector<double>{100, 100}, std::vector<double>{0.5, -0.5}) == 0.0);

    NormalStream s(5, StreamKey{Purpose::nested, 0, 0, 1});
    const std::vector<double> x{104.0, 97.0};
    std::vector<double> xi(2);
    const std::size_t n = 1000000;
    double sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        s.fill(xi);
        const double c = cv_eval(cv, 7, x, xi);
        sum += c;
        sum2 += c * c;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 3 * std::sqrt((sum2 / n - mean * mean) / n));
}

TEST_CASE("perfect linear control variate leaves a(x)") {
    const toys::PerfectLinear toy;
    const auto cv = toy.cv();
    const double c = toy.model.drift_factor(0);
    REQUIRE(c == 1.0625);
    NormalStream s(3, StreamKey{Purpose::nested, 0, 0, 1});
    const std::vector<double> x0{1.0};
    std::vector<double> xi(1), y(1);
    for (int i = 0; i < 10000; ++i) {
        s.fill(xi);
        toy.model.step(x0, xi, 1, y);
        REQUIRE(toy.payoff(y) - cv_eval(cv, 1, x0, xi) == c);
    }
}
