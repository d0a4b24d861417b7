#include "berm/estimators.hpp"

#include <sstream>

namespace berm {

MultilevelSchedule MultilevelSchedule::geometric(std::size_t finest, std::size_t inner_base, std::size_t outer_base) {
    MultilevelSchedule s;
    std::size_t inner = inner_base;
    for (std::size_t l = 0; l <= finest; ++l) {
        s.inner.push_back(inner);
        s.outer.push_back(std::max<std::size_t>(1, outer_base >> l));
        inner *= 4;
    }
    return s;
}

void MultilevelSchedule::validate() const {
    if (outer.empty() || outer.size() != inner.size()) {
        throw ConfigError("multilevel schedule: per-level outer and inner sizes must be non-empty and equally long");
    }
    for (std::size_t l = 0; l < outer.size(); ++l) {
        if (outer[l] < 1 || inner[l] < 1) throw ConfigError("multilevel schedule: sizes must be at least 1");
        if (l > 0 && inner[l] != 4 * inner[l - 1]) {
            std::ostringstream msg;
            msg << "multilevel schedule: level " << l << " has " << inner[l] << " inner samples, expected 4 x "
                << inner[l - 1];
            throw ConfigError(msg.str());
        }
    }
}

void EstimatorConfig::validate() const {
    if (outer_paths < 1) throw ConfigError("estimator: outer_paths must be at least 1");
    if (inner_samples < 1) throw ConfigError("estimator: inner_samples must be at least 1");
}

CostLedger& CostLedger::operator+=(const CostLedger& o) {
    euler_steps += o.euler_steps;
    inner_sims += o.inner_sims;
    value_evals += o.value_evals;
    coef_evals += o.coef_evals;
    cv_terms += o.cv_terms;
    regress_flops += o.regress_flops;
    wall_seconds += o.wall_seconds;
    return *this;
}

double dual_path_payoff(std::span<const double> g, std::span<const double> v, std::span<const double> inner_mean,
                        bool exercise_at_zero) {
    const std::size_t J = v.size();
    double best = exercise_at_zero ? g[0] : -std::numeric_limits<double>::infinity();
    double Y = 0.0;
    for (std::size_t l = 1; l <= J; ++l) {
        Y += v[l - 1] - inner_mean[l - 1];
        const double cand = g[l] - Y;
        if (cand > best) best = cand;
    }
    return best;
}

double eep_path_payoff(std::span<const double> g, std::span<const double> inner_mean, bool exercise_at_zero) {
    const std::size_t J = inner_mean.size();
    double u = g[J];
    for (std::size_t j = exercise_at_zero ? 1 : 2; j <= J; ++j) {
        const double gap = g[j - 1] - inner_mean[j - 1];
        if (gap > 0.0) u += gap;
    }
    return u;
}

std::pair<double, double> mean_and_stderr(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const double mean = pairwise_sum(values) / static_cast<double>(n);
    if (n == 1) return {mean, 0.0};
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
    const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

double VarianceDiagnostic::plain_total() const { return pairwise_sum(plain); }
double VarianceDiagnostic::residual_total() const { return pairwise_sum(residual); }

}  // namespace berm
