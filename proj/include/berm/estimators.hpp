#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "berm/errors.hpp"
#include "berm/model.hpp"
#include "berm/parallel.hpp"
#include "berm/regress.hpp"
#include "berm/rng.hpp"

namespace berm {

/// Per-level sizes of the multilevel estimator; level l refines level l-1 by
/// a factor 4 in the inner sample size.
struct MultilevelSchedule {
    std::vector<std::size_t> outer;  ///< N_l
    std::vector<std::size_t> inner;  ///< (N_d)_l

    std::size_t levels() const { return outer.size(); }
    /// (N_d)_l = inner_base * 4^l, N_l = max(1, outer_base / 2^l), l = 0..finest.
    static MultilevelSchedule geometric(std::size_t finest, std::size_t inner_base, std::size_t outer_base);
    /// Throws ConfigError unless lengths agree, all sizes are >= 1 and each
    /// inner size is exactly 4x the previous one.
    void validate() const;
};

struct EstimatorConfig {
    std::size_t outer_paths = 1;    ///< N
    std::size_t inner_samples = 1;  ///< N_d
    bool exercise_at_zero = false;
    MultilevelSchedule multilevel;
    unsigned threads = 1;

    void validate() const;
};

/// Exact operation counts, merged additively across workers and stages.
struct CostLedger {
    std::uint64_t euler_steps = 0;    ///< outer + inner step() calls
    std::uint64_t inner_sims = 0;     ///< nested sub-samples drawn
    std::uint64_t value_evals = 0;    ///< v_l evaluations
    std::uint64_t coef_evals = 0;     ///< truncated coefficient predictions a~_{l,k}(X_{l-1})
    std::uint64_t cv_terms = 0;       ///< a~ * phi_k products inside control variates
    std::uint64_t regress_flops = 0;  ///< N_r Q^2 per fitted regression
    double wall_seconds = 0.0;

    CostLedger& operator+=(const CostLedger& o);
    /// Deterministic cost used on the complexity axis.
    std::uint64_t total() const { return euler_steps + regress_flops; }
};

struct LevelSummary {
    std::size_t outer = 0;
    std::size_t inner = 0;
    double mean = 0.0;
    double variance = 0.0;  ///< sample variance of per-path level payoffs
    std::vector<double> payoffs;
};

struct PriceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::vector<double> path_payoffs;  ///< empty for multilevel; see levels
    std::vector<LevelSummary> levels;  ///< multilevel only
    CostLedger cost;
    EstimatorConfig config;
    RunKey key;
};

/// max_{j0 <= j <= J} (g_j - Y_j) with Y_j = sum_{l<=j} (v_l - inner_mean_l).
/// g has J+1 entries (dates 0..J), v and inner_mean have J entries (dates 1..J).
double dual_path_payoff(std::span<const double> g, std::span<const double> v,
                        std::span<const double> inner_mean, bool exercise_at_zero);

/// g_J + sum_j (g_{j-1} - Z_j)^+ ; the j = 1 term (exercise at t = 0) only
/// when exercise_at_zero.
double eep_path_payoff(std::span<const double> g, std::span<const double> inner_mean, bool exercise_at_zero);

/// Mean and standard error from per-path values, pairwise-summed in index order.
std::pair<double, double> mean_and_stderr(std::span<const double> values);

namespace detail {

constexpr std::uint64_t kLowerBoundPathTag = std::uint64_t{1} << 62;
inline std::uint64_t level_path_id(std::size_t level, std::size_t n) {
    return (static_cast<std::uint64_t>(level) << 40) | n;
}

/// Simulates outer paths and the nested sub-samples around them.
template <Dynamics D, ValueApprox V>
class PathEngine {
public:
    PathEngine(const D& model, const MaxCallPayoff& payoff, const V& vfun, const CVModel* cv, RunKey key)
        : model_(model),
          payoff_(payoff),
          vfun_(vfun),
          cv_(cv),
          key_(key),
          J_(model.exercise_count()),
          x_(model.state_dim()),
          y_(model.state_dim()),
          xi_(model.innovation_dim()),
          g_(J_ + 1),
          v_(J_),
          coeffs_(cv ? cv->function_count() : 0),
          scratch_(cv ? cv->scratch_size() : 0) {}

    /// Runs one outer path. Afterwards g() holds g_0..g_J, v() holds v_1..v_J and
    /// sums() holds, for each date l and group, the sum over that group's
    /// sub-samples of v_l(X^{(i)}_l) - M^{(i)}_l.
    void run(std::uint64_t path_id, std::size_t inner, std::size_t groups) {
        sums_.assign(J_ * groups, 0.0);
        const std::size_t group_size = inner / groups;
        const std::size_t K = coeffs_.size();
        const auto x0 = model_.initial_state();
        std::copy(x0.begin(), x0.end(), x_.begin());
        g_[0] = payoff_(x_);
        for (std::size_t l = 1; l <= J_; ++l) {
            if (cv_) {
                cv_->coefficients(l, x_, coeffs_);
                ledger.coef_evals += K;
            }
            NormalStream nested(key_.seed, key_.stream(Purpose::nested, path_id, l));
            for (std::size_t grp = 0; grp < groups; ++grp) {
                double s = 0.0;
                for (std::size_t i = 0; i < group_size; ++i) {
                    model_.draw_innovation(nested, xi_);
                    model_.step(x_, xi_, l, y_);
                    double val = vfun_.value(l, y_);
                    if (cv_) val -= cv_->combine(coeffs_, xi_, scratch_);
                    s += val;
                }
                if (!std::isfinite(s)) fail(path_id, l);
                sums_[(l - 1) * groups + grp] = s;
            }
            ledger.euler_steps += inner;
            ledger.inner_sims += inner;
            ledger.value_evals += inner;
            ledger.cv_terms += inner * K;

            NormalStream outer(key_.seed, key_.stream(Purpose::outer, path_id, l));
            model_.draw_innovation(outer, xi_);
            model_.step(x_, xi_, l, y_);
            std::swap(x_, y_);
            for (double c : x_) {
                if (!std::isfinite(c)) fail(path_id, l);
            }
            g_[l] = payoff_(x_);
            v_[l - 1] = vfun_.value(l, x_);
            ledger.euler_steps += 1;
            ledger.value_evals += 1;
        }
    }

    std::span<const double> g() const { return g_; }
    std::span<const double> v() const { return v_; }
    std::span<const double> sums() const { return sums_; }

    CostLedger ledger;

private:
    [[noreturn]] static void fail(std::uint64_t path, std::size_t l) {
        throw NumericalError("model blow-up: non-finite value on path " + std::to_string(path) + " at date " +
                             std::to_string(l));
    }

    const D& model_;
    const MaxCallPayoff& payoff_;
    const V& vfun_;
    const CVModel* cv_;
    RunKey key_;
    std::size_t J_;
    std::vector<double> x_, y_, xi_, g_, v_, sums_, coeffs_, scratch_;
};

enum class UpperKind { dual, eep };

template <Dynamics D, ValueApprox V>
PriceEstimate run_single_level(const D& model, const MaxCallPayoff& payoff, const V& vfun, const CVModel* cv,
                               const EstimatorConfig& cfg, RunKey key, UpperKind kind) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::size_t N = cfg.outer_paths;
    const std::size_t Nd = cfg.inner_samples;
    const std::size_t J = model.exercise_count();
    PriceEstimate est;
    est.config = cfg;
    est.key = key;
    est.path_payoffs.assign(N, 0.0);
    std::vector<CostLedger> ledgers(std::max(1u, cfg.threads));
    parallel_for(N, cfg.threads, [&](std::size_t begin, std::size_t end, unsigned w) {
        PathEngine<D, V> engine(model, payoff, vfun, cv, key);
        std::vector<double> means(J);
        for (std::size_t n = begin; n < end; ++n) {
            engine.run(n, Nd, 1);
            for (std::size_t l = 0; l < J; ++l) means[l] = engine.sums()[l] / static_cast<double>(Nd);
            est.path_payoffs[n] = kind == UpperKind::dual
                                      ? dual_path_payoff(engine.g(), engine.v(), means, cfg.exercise_at_zero)
                                      : eep_path_payoff(engine.g(), means, cfg.exercise_at_zero);
        }
        ledgers[w] = engine.ledger;
    });
    for (const auto& l : ledgers) est.cost += l;
    if (cv) est.cost.regress_flops += cv->regress_flops;
    std::tie(est.value, est.std_error) = mean_and_stderr(est.path_payoffs);
    est.cost.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return est;
}

}  // namespace detail

/// Nested-simulation dual upper bound V_{N,N_d}.
template <Dynamics D, ValueApprox V>
PriceEstimate estimate_dual_standard(const D& model, const MaxCallPayoff& payoff, const V& vfun,
                                     const EstimatorConfig& cfg, RunKey key) {
    return detail::run_single_level(model, payoff, vfun, nullptr, cfg, key, detail::UpperKind::dual);
}

/// Dual upper bound with the regression control variate subtracted from every
/// nested summand. With an empty CVModel this reproduces estimate_dual_standard
/// bit for bit.
template <Dynamics D, ValueApprox V>
PriceEstimate estimate_dual_cv(const D& model, const MaxCallPayoff& payoff, const V& vfun, const CVModel& cv,
                               const EstimatorConfig& cfg, RunKey key) {
    if (cv.exercise_count() != model.exercise_count()) {
        throw ConfigError("estimate_dual_cv: control variate fitted for a different number of dates");
    }
    return detail::run_single_level(model, payoff, vfun, &cv, cfg, key, detail::UpperKind::dual);
}

/// Early-exercise-premium upper bound U_{N,N_d}; optional control variate.
template <Dynamics D, ValueApprox V>
PriceEstimate estimate_eep(const D& model, const MaxCallPayoff& payoff, const V& vfun, const EstimatorConfig& cfg,
                           RunKey key, const CVModel* cv = nullptr) {
    return detail::run_single_level(model, payoff, vfun, cv, cfg, key, detail::UpperKind::eep);
}

/// Multilevel dual estimator: level 0 is a standard estimate; level l >= 1
/// averages fine-minus-coarse dual payoffs where the coarse payoff is the mean
/// over the four disjoint (N_d)_{l-1}-sized groups of the fine sub-sample.
template <Dynamics D, ValueApprox V>
PriceEstimate estimate_multilevel(const D& model, const MaxCallPayoff& payoff, const V& vfun,
                                  const EstimatorConfig& cfg, RunKey key) {
    cfg.multilevel.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::size_t J = model.exercise_count();
    const auto& sched = cfg.multilevel;
    PriceEstimate est;
    est.config = cfg;
    est.key = key;
    double variance = 0.0;
    for (std::size_t level = 0; level < sched.levels(); ++level) {
        const std::size_t N = sched.outer[level];
        const std::size_t Nd = sched.inner[level];
        const std::size_t groups = level == 0 ? 1 : 4;
        const std::size_t coarse = Nd / groups;
        LevelSummary summary{N, Nd, 0.0, 0.0, std::vector<double>(N, 0.0)};
        std::vector<CostLedger> ledgers(std::max(1u, cfg.threads));
        parallel_for(N, cfg.threads, [&](std::size_t begin, std::size_t end, unsigned w) {
            detail::PathEngine<D, V> engine(model, payoff, vfun, nullptr, key);
            std::vector<double> fine(J), grp(J);
            for (std::size_t n = begin; n < end; ++n) {
                engine.run(detail::level_path_id(level, n), Nd, groups);
                const auto sums = engine.sums();
                for (std::size_t l = 0; l < J; ++l) {
                    double s = 0.0;
                    for (std::size_t q = 0; q < groups; ++q) s += sums[l * groups + q];
                    fine[l] = s / static_cast<double>(Nd);
                }
                double value = dual_path_payoff(engine.g(), engine.v(), fine, cfg.exercise_at_zero);
                if (groups > 1) {
                    double coarse_sum = 0.0;
                    for (std::size_t q = 0; q < groups; ++q) {
                        for (std::size_t l = 0; l < J; ++l) grp[l] = sums[l * groups + q] / static_cast<double>(coarse);
                        coarse_sum += dual_path_payoff(engine.g(), engine.v(), grp, cfg.exercise_at_zero);
                    }
                    value -= coarse_sum / static_cast<double>(groups);
                }
                summary.payoffs[n] = value;
            }
            ledgers[w] = engine.ledger;
        });
        for (const auto& l : ledgers) est.cost += l;
        double se;
        std::tie(summary.mean, se) = mean_and_stderr(summary.payoffs);
        summary.variance = se * se * static_cast<double>(N);
        est.value += summary.mean;
        variance += se * se;
        est.levels.push_back(std::move(summary));
    }
    est.std_error = std::sqrt(variance);
    est.cost.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return est;
}

/// Value of the exercise policy "stop at the first j >= 1 with g_j >= C_j,
/// forced at J" on fresh outer paths. A lower bound for the true price.
template <Dynamics D>
PriceEstimate estimate_lower_bound(const D& model, const ValueFunctions& vfun, std::size_t n_paths, RunKey key,
                                   unsigned threads = 1) {
    if (n_paths < 1) throw ConfigError("estimate_lower_bound: n_paths must be at least 1");
    const auto start = std::chrono::steady_clock::now();
    const std::size_t J = model.exercise_count();
    const auto& payoff = vfun.payoff();
    PriceEstimate est;
    est.config.outer_paths = n_paths;
    est.config.inner_samples = 0;
    est.key = key;
    est.path_payoffs.assign(n_paths, 0.0);
    std::vector<CostLedger> ledgers(std::max(1u, threads));
    parallel_for(n_paths, threads, [&](std::size_t begin, std::size_t end, unsigned w) {
        std::vector<double> x(model.state_dim()), y(model.state_dim()), xi(model.innovation_dim());
        CostLedger& ledger = ledgers[w];
        for (std::size_t n = begin; n < end; ++n) {
            const auto x0 = model.initial_state();
            std::copy(x0.begin(), x0.end(), x.begin());
            for (std::size_t j = 1; j <= J; ++j) {
                NormalStream s(key.seed, key.stream(Purpose::outer, detail::kLowerBoundPathTag | n, j));
                model.draw_innovation(s, xi);
                model.step(x, xi, j, y);
                std::swap(x, y);
                ++ledger.euler_steps;
                const double g = payoff(x);
                if (!std::isfinite(g)) throw NumericalError("model blow-up in estimate_lower_bound");
                if (j == J || g >= vfun.continuation(j, x)) {
                    est.path_payoffs[n] = g;
                    break;
                }
            }
        }
    });
    for (const auto& l : ledgers) est.cost += l;
    std::tie(est.value, est.std_error) = mean_and_stderr(est.path_payoffs);
    est.cost.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return est;
}

/// Held-out conditional variances per date l:
///   plain[l-1]    ~ E Var[v_l(X_l) | X_{l-1}]
///   residual[l-1] ~ E Var[v_l(X_l) - M~_l | X_{l-1}]
/// estimated with n_inner sub-samples around each of n_outer outer states.
struct VarianceDiagnostic {
    std::vector<double> plain;
    std::vector<double> residual;
    double plain_total() const;
    double residual_total() const;
};

template <Dynamics D, ValueApprox V>
VarianceDiagnostic conditional_variances(const D& model, const V& vfun, const CVModel& cv, std::size_t n_outer,
                                         std::size_t n_inner, RunKey key) {
    if (n_inner < 2) throw ConfigError("conditional_variances: need at least two inner samples");
    const std::size_t J = model.exercise_count();
    VarianceDiagnostic out{std::vector<double>(J, 0.0), std::vector<double>(J, 0.0)};
    std::vector<double> x(model.state_dim()), y(model.state_dim()), xi(model.innovation_dim());
    std::vector<double> coeffs(cv.function_count()), scratch(cv.scratch_size());
    std::vector<double> a(n_inner), b(n_inner);
    auto var = [](const std::vector<double>& v) {
        const double m = pairwise_sum(v) / static_cast<double>(v.size());
        double s = 0.0;
        for (double t : v) s += (t - m) * (t - m);
        return s / static_cast<double>(v.size() - 1);
    };
    for (std::size_t n = 0; n < n_outer; ++n) {
        const auto x0 = model.initial_state();
        std::copy(x0.begin(), x0.end(), x.begin());
        for (std::size_t l = 1; l <= J; ++l) {
            cv.coefficients(l, x, coeffs);
            NormalStream nested(key.seed, key.stream(Purpose::nested, n, l));
            for (std::size_t i = 0; i < n_inner; ++i) {
                model.draw_innovation(nested, xi);
                model.step(x, xi, l, y);
                a[i] = vfun.value(l, y);
                b[i] = a[i] - cv.combine(coeffs, xi, scratch);
            }
            out.plain[l - 1] += var(a) / static_cast<double>(n_outer);
            out.residual[l - 1] += var(b) / static_cast<double>(n_outer);
            NormalStream outer(key.seed, key.stream(Purpose::outer, n, l));
            model.draw_innovation(outer, xi);
            model.step(x, xi, l, y);
            std::swap(x, y);
        }
    }
    return out;
}

}  // namespace berm
