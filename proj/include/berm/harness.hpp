#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "berm/estimators.hpp"
#include "berm/model.hpp"
#include "berm/regress.hpp"

namespace berm {

/// Epsilon grids and parameter schedules of the complexity experiment. Every
/// epsilon is 2^-i; `scale` multiplies N, N_d, N_r and N_l (desk-scale runs).
struct SweepSpec {
    std::vector<std::string> estimators{"standard", "cv", "multilevel"};
    std::vector<int> standard_exponents{2, 3, 4, 5};
    std::vector<int> cv_exponents{2, 3, 4, 5, 6};
    std::vector<int> multilevel_exponents{2, 3, 4, 5};
    std::size_t replications = 100;
    double scale = 1.0;

    std::size_t outer_paths = 50000;       ///< N for standard and CV
    double standard_inner_coef = 2.0;      ///< N_d = c eps^-2
    double cv_inner_coef = 8.0;            ///< N_d = c eps^-1
    double cv_training_coef = 256.0;       ///< N_r = c eps^-1
    std::size_t cv_blocks = 1;             ///< K
    HermiteSelection cv_selection = HermiteSelection::blocks;
    std::size_t cv_degree = 1;
    bool cv_include_payoff = true;
    std::size_t ml_inner_base = 48;        ///< (N_d)_l = base 4^l
    int ml_outer_log2 = 16;                ///< N_l = 2^(this - l)

    bool exercise_at_zero = false;
    bool record_timing = true;             ///< false writes wall_seconds = 0 (byte-reproducible output)
    unsigned threads = 1;

    void validate(std::size_t dim) const;
    const std::vector<int>& exponents(const std::string& estimator) const;
};

/// Parameters one sweep cell runs with.
struct RunParams {
    std::string estimator;
    int exponent = 0;
    double epsilon = 0.0;
    std::size_t N = 0, N_d = 0, N_r = 0, K = 0, Q = 0, levels = 1;
    MultilevelSchedule multilevel;
};

RunParams schedule_for(const SweepSpec& sweep, const std::string& estimator, int exponent, std::size_t dim);

struct ReferencePrice {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t replications = 0;
    std::size_t N = 0;
    std::size_t N_d = 0;
    std::vector<double> estimates;
};

/// Mean of `reps` independent standard dual estimates; replication r uses
/// seed derive_seed(master, Purpose::reference, r).
template <ValueApprox V>
ReferencePrice compute_reference(const ModelSpec& model, const MaxCallPayoff& payoff, const V& vfun,
                                 std::size_t reps, const EstimatorConfig& cfg, std::uint64_t master_seed) {
    if (reps < 2) throw ConfigError("compute_reference: at least two replications required");
    ReferencePrice ref;
    ref.replications = reps;
    ref.N = cfg.outer_paths;
    ref.N_d = cfg.inner_samples;
    for (std::size_t r = 0; r < reps; ++r) {
        const RunKey key{derive_seed(master_seed, Purpose::reference, r), 0};
        ref.estimates.push_back(estimate_dual_standard(model, payoff, vfun, cfg, key).value);
    }
    std::tie(ref.value, ref.std_error) = mean_and_stderr(ref.estimates);
    return ref;
}

struct RunRecord {
    std::string estimator;
    double epsilon = 0.0;
    std::size_t replication = 0;
    double estimate = 0.0;
    double ref_value = 0.0;
    std::size_t N = 0, N_d = 0, N_r = 0, K = 0, Q = 0, J = 0, levels = 1;
    std::uint64_t euler_steps = 0, inner_sims = 0, regress_flops = 0;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;

    std::uint64_t cost() const { return euler_steps + regress_flops; }
    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// Seed of one sweep cell.
std::uint64_t run_seed(std::uint64_t master, const std::string& estimator, int exponent, std::size_t replication);

/// One sweep cell end to end (fresh CV fit for "cv").
RunRecord run_one(const RunParams& params, std::size_t replication, std::uint64_t seed, const ModelSpec& model,
                  const MaxCallPayoff& payoff, const ValueFunctions& vfun, const SweepSpec& sweep, double ref_value);

/// Runs every (estimator, epsilon, replication) cell in that order, appending
/// to `records` as it goes so a failure leaves the completed prefix behind.
void run_sweep(const SweepSpec& sweep, const ModelSpec& model, const MaxCallPayoff& payoff,
               const ValueFunctions& vfun, double ref_value, std::uint64_t master_seed,
               std::vector<RunRecord>& records,
               const std::function<void(const RunRecord&)>& on_record = {});

std::vector<RunRecord> run_sweep(const SweepSpec& sweep, const ModelSpec& model, const MaxCallPayoff& payoff,
                                 const ValueFunctions& vfun, double ref_value, std::uint64_t master_seed);

struct RmseRow {
    std::string estimator;
    double epsilon = 0.0;
    double rmse = 0.0;
    double bias = 0.0;   ///< mean - ref
    double stdev = 0.0;  ///< population std over replications; rmse^2 = bias^2 + stdev^2
    double mean_cost = 0.0;
    std::size_t n_replications = 0;
};

/// Groups by (estimator, epsilon) in first-appearance order. Throws
/// ConfigError listing every cell with fewer than two replications and every
/// `expected` cell that is absent.
std::vector<RmseRow> estimate_rmse(const std::vector<RunRecord>& records, double ref_value,
                                   const std::vector<std::pair<std::string, double>>& expected = {});

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t n_points = 0;
};

/// Least-squares line log(cost) = intercept + slope * log(1 / rmse); points are
/// (cost, rmse). Throws ConfigError on fewer than two points or nonpositive input.
SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

struct SlopeRow {
    std::string estimator;
    SlopeFit fit;
};

std::vector<SlopeRow> slopes_by_estimator(const std::vector<RmseRow>& table);

/// 17 significant digits, '.' decimal point regardless of locale.
std::string format_double(double v);
double parse_double(std::string_view s);

extern const char* const kRunsHeader;
extern const char* const kRmseHeader;
extern const char* const kSlopesHeader;

void write_csv(const std::vector<RunRecord>& records, const std::filesystem::path& path);
void write_csv(const std::vector<RmseRow>& rows, const std::filesystem::path& path);
void write_csv(const std::vector<SlopeRow>& rows, const std::filesystem::path& path);
/// Appends one row, writing the header first if the file is new or empty.
void append_csv(const RunRecord& record, const std::filesystem::path& path);

std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path);
std::vector<RmseRow> read_rmse_csv(const std::filesystem::path& path);
std::vector<SlopeRow> read_slopes_csv(const std::filesystem::path& path);

}  // namespace berm
