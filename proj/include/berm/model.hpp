#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "berm/rng.hpp"

namespace berm {

/// Bermudan max-call payoff (max_i x_i - K)^+, identical at every exercise date.
struct MaxCallPayoff {
    double strike = 100.0;

    double operator()(std::span<const double> x) const {
        double m = x[0];
        for (std::size_t i = 1; i < x.size(); ++i) m = x[i] > m ? x[i] : m;
        return m > strike ? m - strike : 0.0;
    }
};

inline double payoff_eval(const MaxCallPayoff& payoff, std::span<const double> x) { return payoff(x); }

/// Euler scheme for d coordinates of correlated geometric Brownian motion,
///   X^i_l = X^i_{l-1} * (1 + (r - delta_i) dt + sigma_i (A^i . xi_l) sqrt(dt)),
/// with A the lower Cholesky factor of the correlation matrix.
class ModelSpec {
public:
    struct Params {
        double rate = 0.0;                ///< r, per year
        std::vector<double> dividends;    ///< delta_i, per year
        std::vector<double> volatilities; ///< sigma_i, per sqrt(year)
        std::vector<double> correlation;  ///< rho, d*d row-major; empty means identity
        std::vector<double> spot;         ///< x_0
        double maturity = 1.0;            ///< T, years
        std::size_t exercise_dates = 1;   ///< J
    };

    /// Validates and factorizes; throws ConfigError.
    explicit ModelSpec(Params p);

    std::size_t dim() const { return spot_.size(); }
    std::size_t state_dim() const { return dim(); }
    std::size_t innovation_dim() const { return dim(); }
    std::size_t exercise_count() const { return exercise_dates_; }
    double maturity() const { return maturity_; }
    double dt() const { return maturity_ / static_cast<double>(exercise_dates_); }
    double rate() const { return rate_; }
    std::span<const double> dividends() const { return dividends_; }
    std::span<const double> volatilities() const { return vols_; }
    std::span<const double> correlation() const { return correlation_; }
    /// Row-major lower-triangular factor A with A A^T = rho.
    std::span<const double> factor() const { return factor_; }
    std::span<const double> initial_state() const { return spot_; }
    bool independent() const { return identity_; }

    /// 1 + (r - delta_i) dt
    double drift_factor(std::size_t i) const { return drift_factor_[i]; }
    /// sigma_i sqrt(dt)
    double diffusion_scale(std::size_t i) const { return vol_sqrt_dt_[i]; }

    void draw_innovation(NormalStream& s, std::span<double> xi) const { s.fill(xi); }

    /// One Euler step; `out` must not alias `x`. Never clamps.
    void step(std::span<const double> x, std::span<const double> xi, std::size_t /*l*/,
              std::span<double> out) const {
        const std::size_t d = dim();
        for (std::size_t i = 0; i < d; ++i) {
            double z;
            if (identity_) {
                z = xi[i];
            } else {
                z = 0.0;
                const double* row = factor_.data() + i * d;
                for (std::size_t k = 0; k <= i; ++k) z += row[k] * xi[k];
            }
            out[i] = x[i] * (drift_factor_[i] + vol_sqrt_dt_[i] * z);
        }
    }

private:
    double rate_;
    std::vector<double> dividends_;
    std::vector<double> vols_;
    std::vector<double> correlation_;
    std::vector<double> factor_;
    std::vector<double> spot_;
    double maturity_;
    std::size_t exercise_dates_;
    std::vector<double> drift_factor_;
    std::vector<double> vol_sqrt_dt_;
    bool identity_ = true;
};

/// Anything the estimators can simulate: a Markov chain X_l = Phi_l(X_{l-1}, xi_l)
/// with explicit innovations.
template <class D>
concept Dynamics = requires(const D& m, NormalStream& s, std::span<const double> x,
                            std::span<double> out, std::size_t l) {
    { m.state_dim() } -> std::convertible_to<std::size_t>;
    { m.innovation_dim() } -> std::convertible_to<std::size_t>;
    { m.exercise_count() } -> std::convertible_to<std::size_t>;
    { m.initial_state() } -> std::convertible_to<std::span<const double>>;
    m.draw_innovation(s, out);
    m.step(x, std::span<const double>(out), l, out);
};

std::vector<double> euler_step(const ModelSpec& spec, std::span<const double> x,
                               std::span<const double> xi, std::size_t l);

/// Simulated paths plus the innovations that produced them.
class PathBatch {
public:
    PathBatch(std::size_t n_paths, std::size_t dates, std::size_t dim, std::size_t inno_dim);

    std::size_t size() const { return n_paths_; }
    std::size_t exercise_count() const { return dates_; }
    std::size_t dim() const { return dim_; }
    std::size_t innovation_dim() const { return inno_dim_; }

    /// State at date l in 0..J.
    std::span<const double> state(std::size_t n, std::size_t l) const {
        return {states_.data() + (n * (dates_ + 1) + l) * dim_, dim_};
    }
    std::span<double> state(std::size_t n, std::size_t l) {
        return {states_.data() + (n * (dates_ + 1) + l) * dim_, dim_};
    }
    /// Innovation xi_l driving the step into date l, l in 1..J.
    std::span<const double> innovation(std::size_t n, std::size_t l) const {
        return {innovations_.data() + (n * dates_ + (l - 1)) * inno_dim_, inno_dim_};
    }
    std::span<double> innovation(std::size_t n, std::size_t l) {
        return {innovations_.data() + (n * dates_ + (l - 1)) * inno_dim_, inno_dim_};
    }

    std::span<const double> raw_states() const { return states_; }
    std::span<const double> raw_innovations() const { return innovations_; }

    std::uint64_t seed = 0;
    Purpose purpose = Purpose::training;
    std::uint64_t replication = 0;

private:
    std::size_t n_paths_, dates_, dim_, inno_dim_;
    std::vector<double> states_;
    std::vector<double> innovations_;
};

/// Path n, step l draws from substream (purpose, replication, n, l).
/// Throws NumericalError on a non-finite state.
PathBatch simulate_paths(const ModelSpec& spec, std::size_t n_paths, std::uint64_t seed,
                         Purpose purpose, std::uint64_t replication);

struct SubSample {
    std::vector<double> states;       ///< n_sub x d
    std::vector<double> innovations;  ///< n_sub x m
};

/// n_sub draws from the law of X_l given X_{l-1} = x_prev, from the given substream.
SubSample resample_substep(const ModelSpec& spec, std::span<const double> x_prev, std::size_t l,
                           std::size_t n_sub, std::uint64_t seed, const StreamKey& key);

}  // namespace berm
