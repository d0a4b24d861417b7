#include "berm/regress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "berm/errors.hpp"

namespace berm {

double LinearModel::predict(std::span<const double> features) const {
    double s = 0.0;
    for (std::size_t q = 0; q < coef.size(); ++q) s += coef[q] * features[q];
    return s;
}

namespace {

constexpr double kConditionLimit = 1e12;
constexpr double kRidgeFactor = 1e-10;

}  // namespace

std::vector<LinearModel> least_squares_fit(const FeatureMatrix& features, const Eigen::MatrixXd& targets) {
    const Eigen::Index n = features.rows();
    const Eigen::Index Q = features.cols();
    if (n < Q) {
        std::ostringstream msg;
        msg << "least_squares_fit: " << n << " observations for " << Q << " basis functions";
        throw ConfigError(msg.str());
    }
    if (targets.rows() != n) throw ConfigError("least_squares_fit: target length does not match features");

    std::vector<Eigen::Index> active;
    std::vector<double> scale;
    for (Eigen::Index q = 0; q < Q; ++q) {
        const double rms = std::sqrt(features.col(q).squaredNorm() / static_cast<double>(n));
        if (rms > 0.0 && std::isfinite(rms)) {
            active.push_back(q);
            scale.push_back(rms);
        } else if (!std::isfinite(rms)) {
            throw NumericalError("least_squares_fit: non-finite feature column");
        }
    }
    if (active.empty()) throw NumericalError("least_squares_fit: all features are zero");

    const auto p = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd A(n, p);
    for (Eigen::Index j = 0; j < p; ++j) A.col(j) = features.col(active[j]) / scale[j];

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    const auto rank = static_cast<std::size_t>(qr.rank());
    const auto& R = qr.matrixR();
    const double r0 = std::abs(R(0, 0));
    const double rr = rank > 0 ? std::abs(R(rank - 1, rank - 1)) : 0.0;
    const double condition = rr > 0.0 ? r0 / rr : std::numeric_limits<double>::infinity();

    Eigen::MatrixXd sol;
    bool ridge = false;
    if (rank < static_cast<std::size_t>(p)) {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
        sol = cod.solve(targets);
    } else if (condition > kConditionLimit) {
        const double lambda = kRidgeFactor * A.squaredNorm() / static_cast<double>(n);
        Eigen::MatrixXd aug(n + p, p);
        aug.topRows(n) = A;
        aug.bottomRows(p) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(p, p);
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + p, targets.cols());
        rhs.topRows(n) = targets;
        sol = aug.colPivHouseholderQr().solve(rhs);
        ridge = true;
    } else {
        sol = qr.solve(targets);
    }

    std::vector<LinearModel> models(static_cast<std::size_t>(targets.cols()));
    for (Eigen::Index t = 0; t < targets.cols(); ++t) {
        LinearModel& m = models[static_cast<std::size_t>(t)];
        m.coef.assign(static_cast<std::size_t>(Q), 0.0);
        for (Eigen::Index j = 0; j < p; ++j) m.coef[static_cast<std::size_t>(active[j])] = sol(j, t) / scale[j];
        for (double c : m.coef) {
            if (!std::isfinite(c)) throw NumericalError("least_squares_fit: non-finite coefficient");
        }
        const Eigen::VectorXd resid = A * sol.col(t) - targets.col(t);
        m.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
        m.condition = condition;
        m.rank = rank;
        m.ridge = ridge;
    }
    return models;
}

LinearModel least_squares_fit(const FeatureMatrix& features, std::span<const double> targets) {
    Eigen::MatrixXd t(static_cast<Eigen::Index>(targets.size()), 1);
    for (std::size_t i = 0; i < targets.size(); ++i) t(static_cast<Eigen::Index>(i), 0) = targets[i];
    return std::move(least_squares_fit(features, t).front());
}

// ---------------------------------------------------------------------------

ValueFunctions::ValueFunctions(MaxCallPayoff payoff, StateBasis basis, std::size_t exercise_dates,
                               std::vector<LinearModel> continuation, std::vector<double> bounds)
    : payoff_(payoff),
      basis_(std::move(basis)),
      J_(exercise_dates),
      continuation_(std::move(continuation)),
      bounds_(std::move(bounds)) {
    if (J_ < 1) throw ConfigError("ValueFunctions: at least one exercise date required");
    if (continuation_.size() != J_ - 1) throw ArtifactError("ValueFunctions: expected J-1 continuation models");
    if (bounds_.size() != J_) throw ArtifactError("ValueFunctions: expected J bounds");
    for (const auto& m : continuation_) {
        if (m.coef.size() != basis_.size()) throw ArtifactError("ValueFunctions: coefficient size mismatch");
    }
}

namespace {

FeatureMatrix design_matrix(const PathBatch& paths, std::size_t date, const StateBasis& basis,
                            const MaxCallPayoff& payoff) {
    FeatureMatrix X(static_cast<Eigen::Index>(paths.size()), static_cast<Eigen::Index>(basis.size()));
    for (std::size_t n = 0; n < paths.size(); ++n) {
        basis.eval(payoff, paths.state(n, date),
                   std::span<double>(X.row(static_cast<Eigen::Index>(n)).data(), basis.size()));
    }
    return X;
}

}  // namespace

ValueFunctions fit_lower_bound_tv(const PathBatch& training, const MaxCallPayoff& payoff,
                                  const StateBasis& basis) {
    const std::size_t N = training.size();
    const std::size_t J = training.exercise_count();
    if (J > 1 && N < basis.size()) {
        throw ConfigError("fit_lower_bound_tv: fewer training paths than basis functions");
    }
    std::vector<LinearModel> continuation(J > 0 ? J - 1 : 0);
    std::vector<double> next(N);
    for (std::size_t n = 0; n < N; ++n) next[n] = payoff(training.state(n, J));
    for (std::size_t j = J - 1; j >= 1; --j) {
        const FeatureMatrix X = design_matrix(training, j, basis, payoff);
        continuation[j - 1] = least_squares_fit(X, next);
        for (std::size_t n = 0; n < N; ++n) {
            const auto x = training.state(n, j);
            const double c = basis.dot(continuation[j - 1].coef, payoff, x);
            const double g = payoff(x);
            next[n] = c > g ? c : g;
        }
    }

    ValueFunctions fitted(payoff, basis, J, std::move(continuation), std::vector<double>(J, 0.0));
    std::vector<double> bounds(J, 0.0);
    for (std::size_t j = 1; j <= J; ++j) {
        double mx = 0.0;
        for (std::size_t n = 0; n < N; ++n) mx = std::max(mx, std::abs(fitted.value(j, training.state(n, j))));
        bounds[j - 1] = 1.1 * mx;
    }
    std::vector<LinearModel> models(fitted.continuation_models().begin(), fitted.continuation_models().end());
    return ValueFunctions(payoff, basis, J, std::move(models), std::move(bounds));
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> select_hermite_functions(const HermiteSystem& system, std::size_t K,
                                                  HermiteSelection selection) {
    std::vector<std::size_t> ks;
    if (selection == HermiteSelection::blocks) {
        if (K > system.max_block()) throw ConfigError("CV truncation K exceeds the enumerated Hermite blocks");
        for (std::size_t b = 1; b <= K; ++b) {
            const auto blk = system.block(b);
            ks.insert(ks.end(), blk.begin(), blk.end());
        }
    } else {
        if (K > system.size()) throw ConfigError("CV truncation K exceeds the enumerated Hermite functions");
        for (std::size_t k = 1; k <= K; ++k) ks.push_back(k);
    }
    return ks;
}

std::size_t required_blocks(std::size_t m, std::size_t K, HermiteSelection selection) {
    if (selection == HermiteSelection::blocks) return K;
    std::size_t b = 0, total = 0;
    while (total < K) total += block_size(m, ++b);
    return b;
}

CVModel::CVModel(StateBasis basis, MaxCallPayoff payoff, HermiteSystem system, std::size_t K,
                 HermiteSelection selection, std::size_t exercise_dates, double bound,
                 std::vector<std::vector<LinearModel>> coefficients)
    : basis_(std::move(basis)),
      payoff_(payoff),
      system_(std::move(system)),
      K_(K),
      selection_(selection),
      functions_(select_hermite_functions(system_, K, selection)),
      J_(exercise_dates),
      bound_(bound),
      coef_(std::move(coefficients)) {
    if (coef_.size() != J_) throw ArtifactError("CVModel: expected one coefficient set per date");
    for (const auto& per_date : coef_) {
        if (per_date.size() != functions_.size()) throw ArtifactError("CVModel: coefficient count mismatch");
        for (const auto& m : per_date) {
            if (m.coef.size() != basis_.size()) throw ArtifactError("CVModel: basis size mismatch");
        }
    }
    if (!(bound_ >= 0.0)) throw ArtifactError("CVModel: truncation level must be nonnegative");
}

CVModel CVModel::empty(std::size_t state_dim, std::size_t innovation_dim, std::size_t exercise_dates,
                       const MaxCallPayoff& payoff) {
    return CVModel(StateBasis(state_dim, 0, false), payoff, HermiteSystem(innovation_dim, 0), 0,
                   HermiteSelection::blocks, exercise_dates, 0.0,
                   std::vector<std::vector<LinearModel>>(exercise_dates));
}

void CVModel::coefficients(std::size_t l, std::span<const double> x_prev, std::span<double> out) const {
    const auto& models = coef_[l - 1];
    for (std::size_t j = 0; j < models.size(); ++j) {
        const double a = basis_.dot(models[j].coef, payoff_, x_prev);
        out[j] = std::clamp(a, -bound_, bound_);
    }
}

double CVModel::combine(std::span<const double> coeffs, std::span<const double> xi,
                        std::span<double> scratch) const {
    if (functions_.empty()) return 0.0;
    const std::size_t table = system_.dim() * (system_.max_block() + 1);
    auto phis = scratch.subspan(table, functions_.size());
    system_.eval_many(functions_, xi, scratch.first(table), phis);
    double m = 0.0;
    for (std::size_t j = 0; j < functions_.size(); ++j) m += coeffs[j] * phis[j];
    return m;
}

double cv_eval(const CVModel& cv, std::size_t l, std::span<const double> x_prev, std::span<const double> xi) {
    std::vector<double> coeffs(cv.function_count());
    std::vector<double> scratch(cv.scratch_size());
    cv.coefficients(l, x_prev, coeffs);
    return cv.combine(coeffs, xi, scratch);
}

namespace detail {

CVModel fit_cv_from_values(const PathBatch& training, const Eigen::MatrixXd& values, const StateBasis& basis,
                           const MaxCallPayoff& payoff, std::size_t K, HermiteSelection selection) {
    const std::size_t N = training.size();
    const std::size_t J = training.exercise_count();
    const std::size_t m = training.innovation_dim();
    if (N < basis.size()) throw ConfigError("fit_cv_coefficients: fewer training paths than basis functions");
    HermiteSystem system(m, required_blocks(m, K, selection));
    const auto ks = select_hermite_functions(system, K, selection);

    const double bound = 1.1 * values.cwiseAbs().maxCoeff();
    std::vector<std::vector<LinearModel>> coef(J);
    std::uint64_t flops = 0;
    if (!ks.empty()) {
        std::vector<double> table(m * (system.max_block() + 1));
        std::vector<double> phis(ks.size());
        for (std::size_t l = 1; l <= J; ++l) {
            const FeatureMatrix X = design_matrix(training, l - 1, basis, payoff);
            Eigen::MatrixXd targets(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(ks.size()));
            for (std::size_t n = 0; n < N; ++n) {
                system.eval_many(ks, training.innovation(n, l), table, phis);
                const double v = values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l - 1));
                for (std::size_t j = 0; j < ks.size(); ++j) {
                    targets(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) = v * phis[j];
                }
            }
            coef[l - 1] = least_squares_fit(X, targets);
            flops += static_cast<std::uint64_t>(ks.size()) * N * basis.size() * basis.size();
        }
    }
    CVModel cv(basis, payoff, std::move(system), K, selection, J, bound, std::move(coef));
    cv.regress_flops = flops;
    cv.training_paths = N;
    return cv;
}

}  // namespace detail

}  // namespace berm
