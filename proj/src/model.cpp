#include "berm/model.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "berm/errors.hpp"

namespace berm {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model: " + what);
}

// Cholesky that accepts semidefinite input: a zero pivot zeroes its column,
// which is only legal if the remaining entries of that column vanish too.
std::vector<double> lower_factor(const std::vector<double>& rho, std::size_t d) {
    constexpr double tol = 1e-12;
    std::vector<double> a(d * d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double s = rho[j * d + j];
        for (std::size_t k = 0; k < j; ++k) s -= a[j * d + k] * a[j * d + k];
        if (s < -tol) throw ConfigError("model: correlation matrix is not positive semidefinite");
        const double pivot = s > tol ? std::sqrt(s) : 0.0;
        a[j * d + j] = pivot;
        for (std::size_t i = j + 1; i < d; ++i) {
            double t = rho[i * d + j];
            for (std::size_t k = 0; k < j; ++k) t -= a[i * d + k] * a[j * d + k];
            if (pivot == 0.0) {
                if (std::abs(t) > 1e-10) {
                    throw ConfigError("model: correlation matrix is not positive semidefinite");
                }
                a[i * d + j] = 0.0;
            } else {
                a[i * d + j] = t / pivot;
            }
        }
    }
    return a;
}

}  // namespace

ModelSpec::ModelSpec(Params p)
    : rate_(p.rate),
      dividends_(std::move(p.dividends)),
      vols_(std::move(p.volatilities)),
      correlation_(std::move(p.correlation)),
      spot_(std::move(p.spot)),
      maturity_(p.maturity),
      exercise_dates_(p.exercise_dates) {
    const std::size_t d = spot_.size();
    require(d >= 1, "dimension must be positive");
    require(dividends_.size() == d, "dividends must have length d");
    require(vols_.size() == d, "volatilities must have length d");
    require(std::isfinite(rate_), "rate must be finite");
    require(std::isfinite(maturity_) && maturity_ > 0.0, "maturity must be positive");
    require(exercise_dates_ >= 1, "exercise_dates must be at least 1");
    for (std::size_t i = 0; i < d; ++i) {
        require(std::isfinite(spot_[i]) && spot_[i] > 0.0, "spot must be positive");
        require(std::isfinite(vols_[i]) && vols_[i] >= 0.0, "volatilities must be nonnegative");
        require(std::isfinite(dividends_[i]), "dividends must be finite");
    }

    if (correlation_.empty()) {
        correlation_.assign(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) correlation_[i * d + i] = 1.0;
    }
    require(correlation_.size() == d * d, "correlation must be d x d");
    identity_ = true;
    for (std::size_t i = 0; i < d; ++i) {
        require(std::abs(correlation_[i * d + i] - 1.0) <= 1e-12, "correlation diagonal must be 1");
        for (std::size_t k = 0; k < d; ++k) {
            const double v = correlation_[i * d + k];
            require(std::isfinite(v) && std::abs(v) <= 1.0 + 1e-12, "correlation entries must lie in [-1, 1]");
            require(std::abs(v - correlation_[k * d + i]) <= 1e-12, "correlation must be symmetric");
            if (i != k && v != 0.0) identity_ = false;
        }
    }
    factor_ = lower_factor(correlation_, d);
    if (identity_) {
        for (std::size_t i = 0; i < d; ++i) factor_[i * d + i] = 1.0;
    }

    const double h = dt();
    drift_factor_.resize(d);
    vol_sqrt_dt_.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        drift_factor_[i] = 1.0 + (rate_ - dividends_[i]) * h;
        vol_sqrt_dt_[i] = vols_[i] * std::sqrt(h);
    }
}

std::vector<double> euler_step(const ModelSpec& spec, std::span<const double> x,
                               std::span<const double> xi, std::size_t l) {
    std::vector<double> out(spec.dim());
    spec.step(x, xi, l, out);
    return out;
}

PathBatch::PathBatch(std::size_t n_paths, std::size_t dates, std::size_t dim, std::size_t inno_dim)
    : n_paths_(n_paths),
      dates_(dates),
      dim_(dim),
      inno_dim_(inno_dim),
      states_(n_paths * (dates + 1) * dim),
      innovations_(n_paths * dates * inno_dim) {}

namespace {

void check_finite(std::span<const double> x, std::size_t n, std::size_t l) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            std::ostringstream msg;
            msg << "model blow-up: non-finite state on path " << n << " at date " << l;
            throw NumericalError(msg.str());
        }
    }
}

}  // namespace

PathBatch simulate_paths(const ModelSpec& spec, std::size_t n_paths, std::uint64_t seed,
                         Purpose purpose, std::uint64_t replication) {
    if (n_paths < 1) throw ConfigError("simulate_paths: n_paths must be at least 1");
    const std::size_t J = spec.exercise_count();
    PathBatch batch(n_paths, J, spec.dim(), spec.innovation_dim());
    batch.seed = seed;
    batch.purpose = purpose;
    batch.replication = replication;
    const auto x0 = spec.initial_state();
    for (std::size_t n = 0; n < n_paths; ++n) {
        auto s0 = batch.state(n, 0);
        std::copy(x0.begin(), x0.end(), s0.begin());
        for (std::size_t l = 1; l <= J; ++l) {
            NormalStream stream(seed, StreamKey{purpose, replication, n, l});
            auto xi = batch.innovation(n, l);
            spec.draw_innovation(stream, xi);
            auto next = batch.state(n, l);
            spec.step(batch.state(n, l - 1), xi, l, next);
            check_finite(next, n, l);
        }
    }
    return batch;
}

SubSample resample_substep(const ModelSpec& spec, std::span<const double> x_prev, std::size_t l,
                           std::size_t n_sub, std::uint64_t seed, const StreamKey& key) {
    if (n_sub < 1) throw ConfigError("resample_substep: n_sub must be at least 1");
    const std::size_t d = spec.dim();
    const std::size_t m = spec.innovation_dim();
    SubSample out{std::vector<double>(n_sub * d), std::vector<double>(n_sub * m)};
    NormalStream stream(seed, key);
    for (std::size_t i = 0; i < n_sub; ++i) {
        std::span<double> xi(out.innovations.data() + i * m, m);
        std::span<double> y(out.states.data() + i * d, d);
        spec.draw_innovation(stream, xi);
        spec.step(x_prev, xi, l, y);
        check_finite(y, key.path, l);
    }
    return out;
}

}  // namespace berm
