#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "berm/basis.hpp"
#include "berm/model.hpp"

namespace berm {

struct LinearModel {
    std::vector<double> coef;
    double residual_rms = 0.0;
    double condition = 1.0;   ///< |R_00 / R_rr| of the equilibrated QR, r = rank - 1
    std::size_t rank = 0;
    bool ridge = false;       ///< refit with a ridge term because condition > 1e12

    double predict(std::span<const double> features) const;
};

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Least squares over the columns of `features` (n x Q). Columns are
/// equilibrated to unit RMS; all-zero columns get a zero coefficient. Rank
/// deficiency gives the minimum-norm solution (in equilibrated coordinates);
/// condition > 1e12 triggers a ridge refit with
/// lambda = 1e-10 * mean squared row norm.
/// Throws ConfigError when n < Q, NumericalError when every feature is zero
/// or the result is not finite.
LinearModel least_squares_fit(const FeatureMatrix& features, std::span<const double> targets);

/// Same, for several target columns sharing one decomposition.
std::vector<LinearModel> least_squares_fit(const FeatureMatrix& features, const Eigen::MatrixXd& targets);

/// Value functions v_j, j = 1..J: anything that can evaluate v_j(x).
template <class V>
concept ValueApprox = requires(const V& v, std::size_t j, std::span<const double> x) {
    { v.value(j, x) } -> std::convertible_to<double>;
};

/// Tsitsiklis-Van Roy lower-bound approximations
///   v_J = g,  v_j = max(g, C_j)  for 1 <= j < J,
/// where C_j is a regression of v_{j+1}(X_{j+1}) on basis(X_j).
class ValueFunctions {
public:
    ValueFunctions(MaxCallPayoff payoff, StateBasis basis, std::size_t exercise_dates,
                   std::vector<LinearModel> continuation, std::vector<double> bounds);

    const MaxCallPayoff& payoff() const { return payoff_; }
    const StateBasis& basis() const { return basis_; }
    std::size_t exercise_count() const { return J_; }

    /// Continuation estimate C_j(x), 1 <= j < J.
    double continuation(std::size_t j, std::span<const double> x) const {
        return basis_.dot(continuation_[j - 1].coef, payoff_, x);
    }
    double value(std::size_t j, std::span<const double> x) const {
        const double g = payoff_(x);
        if (j >= J_) return g;
        const double c = continuation(j, x);
        return c > g ? c : g;
    }
    /// F_j: 1.1 * max |v_j| over the fitting paths.
    double bound(std::size_t j) const { return bounds_[j - 1]; }
    std::span<const double> bounds() const { return bounds_; }
    const LinearModel& continuation_model(std::size_t j) const { return continuation_[j - 1]; }
    std::span<const LinearModel> continuation_models() const { return continuation_; }

private:
    MaxCallPayoff payoff_;
    StateBasis basis_;
    std::size_t J_;
    std::vector<LinearModel> continuation_;  // index j-1, j = 1..J-1
    std::vector<double> bounds_;             // index j-1, j = 1..J
};

ValueFunctions fit_lower_bound_tv(const PathBatch& training, const MaxCallPayoff& payoff,
                                  const StateBasis& basis);

/// How the truncation count K selects Hermite directions.
enum class HermiteSelection {
    blocks,     ///< K = number of total-degree blocks
    functions,  ///< K = number of leading functions in the enumeration
};

/// Fitted control-variate coefficient functions a_{l,k}(x), truncated to [-F, F].
class CVModel {
public:
    CVModel(StateBasis basis, MaxCallPayoff payoff, HermiteSystem system, std::size_t K,
            HermiteSelection selection, std::size_t exercise_dates, double bound,
            std::vector<std::vector<LinearModel>> coefficients);

    /// Empty control variate (K = 0).
    static CVModel empty(std::size_t state_dim, std::size_t innovation_dim, std::size_t exercise_dates,
                         const MaxCallPayoff& payoff);

    std::size_t truncation() const { return K_; }
    HermiteSelection selection() const { return selection_; }
    std::span<const std::size_t> functions() const { return functions_; }
    std::size_t function_count() const { return functions_.size(); }
    const StateBasis& basis() const { return basis_; }
    const MaxCallPayoff& payoff() const { return payoff_; }
    const HermiteSystem& system() const { return system_; }
    std::size_t exercise_count() const { return J_; }
    double bound() const { return bound_; }
    const LinearModel& model(std::size_t l, std::size_t idx) const { return coef_[l - 1][idx]; }

    /// Truncated predictions a~_{l,k}(x_prev) for every included k.
    void coefficients(std::size_t l, std::span<const double> x_prev, std::span<double> out) const;

    /// sum_k coeffs_k phi_k(xi); `scratch` needs scratch_size() entries.
    double combine(std::span<const double> coeffs, std::span<const double> xi, std::span<double> scratch) const;
    std::size_t scratch_size() const { return system_.dim() * (system_.max_block() + 1) + functions_.size(); }

    /// Number of regressions fitted (J times included functions) and their
    /// size-derived flop proxy N_r Q^2 each.
    std::uint64_t regress_flops = 0;
    std::size_t training_paths = 0;

private:
    StateBasis basis_;
    MaxCallPayoff payoff_;
    HermiteSystem system_;
    std::size_t K_;
    HermiteSelection selection_;
    std::vector<std::size_t> functions_;
    std::size_t J_;
    double bound_;
    std::vector<std::vector<LinearModel>> coef_;  // [l-1][idx]
};

/// Hermite function indices selected by K under the given rule.
std::vector<std::size_t> select_hermite_functions(const HermiteSystem& system, std::size_t K,
                                                  HermiteSelection selection);

/// Max block needed to enumerate the selection.
std::size_t required_blocks(std::size_t m, std::size_t K, HermiteSelection selection);

/// Regresses v_l(X_l) phi_k(xi_l) on basis(X_{l-1}) for l = 1..J and each
/// selected k. F = 1.1 * max over training paths and dates of |v_l(X_l)|.
template <ValueApprox V>
CVModel fit_cv_coefficients(const PathBatch& training, const V& vfun, const StateBasis& basis,
                            const MaxCallPayoff& payoff, std::size_t K,
                            HermiteSelection selection = HermiteSelection::blocks);

double cv_eval(const CVModel& cv, std::size_t l, std::span<const double> x_prev, std::span<const double> xi);

// ---------------------------------------------------------------------------

namespace detail {
CVModel fit_cv_from_values(const PathBatch& training, const Eigen::MatrixXd& values, const StateBasis& basis,
                           const MaxCallPayoff& payoff, std::size_t K, HermiteSelection selection);
}

template <ValueApprox V>
CVModel fit_cv_coefficients(const PathBatch& training, const V& vfun, const StateBasis& basis,
                            const MaxCallPayoff& payoff, std::size_t K, HermiteSelection selection) {
    const std::size_t N = training.size();
    const std::size_t J = training.exercise_count();
    Eigen::MatrixXd values(N, J);  // v_l(X_l^n), column l-1
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t l = 1; l <= J; ++l) values(n, l - 1) = vfun.value(l, training.state(n, l));
    }
    return detail::fit_cv_from_values(training, values, basis, payoff, K, selection);
}

}  // namespace berm
