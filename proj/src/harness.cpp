#include "berm/harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace berm {

namespace {

const std::vector<std::string> kKnownEstimators{"standard", "cv", "multilevel", "eep"};

std::size_t scaled(double s, double x) {
    const long long v = std::llround(s * x);
    return v < 1 ? std::size_t{1} : static_cast<std::size_t>(v);
}

std::uint64_t estimator_id(const std::string& name) {
    for (std::size_t i = 0; i < kKnownEstimators.size(); ++i) {
        if (kKnownEstimators[i] == name) return i + 1;
    }
    throw ConfigError("unknown estimator '" + name + "' (expected standard, cv, multilevel or eep)");
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <class T>
T parse_uint(std::string_view s) {
    T v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw ArtifactError("CSV: cannot parse integer '" + std::string(s) + "'");
    }
    return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::trunc) {
    std::ofstream out(path, std::ios::binary | mode);
    if (!out) throw ArtifactError("cannot open '" + path.string() + "' for writing");
    return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw ArtifactError("write failed for '" + path.string() + "'");
}

// Reads a CSV, checks the header, returns the data rows split into cells.
std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path, const char* header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open '" + path.string() + "' for reading");
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw ArtifactError("'" + path.string() + "': unexpected header (expected " + header + ")");
    }
    const std::size_t cols = split(header).size();
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != cols) {
            throw ArtifactError("'" + path.string() + "': row " + std::to_string(rows.size() + 1) + " has " +
                                std::to_string(cells.size()) + " fields, expected " + std::to_string(cols));
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::string row(const RunRecord& r) {
    std::string s;
    s += r.estimator + ',' + format_double(r.epsilon) + ',' + std::to_string(r.replication) + ',';
    s += format_double(r.estimate) + ',' + format_double(r.ref_value) + ',';
    for (std::size_t v : {r.N, r.N_d, r.N_r, r.K, r.Q, r.J, r.levels}) s += std::to_string(v) + ',';
    for (std::uint64_t v : {r.euler_steps, r.inner_sims, r.regress_flops}) s += std::to_string(v) + ',';
    s += format_double(r.wall_seconds) + ',' + std::to_string(r.seed) + '\n';
    return s;
}

}  // namespace

const char* const kRunsHeader =
    "estimator,epsilon,replication,estimate,ref_value,N,N_d,N_r,K,Q,J,levels,euler_steps,inner_sims,"
    "regress_flops,wall_seconds,seed";
const char* const kRmseHeader = "estimator,epsilon,rmse,bias,stdev,mean_cost,n_replications";
const char* const kSlopesHeader = "estimator,slope,intercept,n_points";

const std::vector<int>& SweepSpec::exponents(const std::string& estimator) const {
    if (estimator == "cv") return cv_exponents;
    if (estimator == "multilevel") return multilevel_exponents;
    estimator_id(estimator);
    return standard_exponents;
}

void SweepSpec::validate(std::size_t dim) const {
    if (estimators.empty()) throw ConfigError("sweep: no estimators listed");
    if (replications < 1) throw ConfigError("sweep: replications must be at least 1");
    if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("sweep: scale must lie in (0, 1]");
    if (outer_paths < 1) throw ConfigError("sweep: outer_paths must be at least 1");
    for (const auto& e : estimators) {
        const auto& ex = exponents(e);
        if (ex.empty()) throw ConfigError("sweep: empty epsilon list for " + e);
        for (std::size_t i = 0; i < ex.size(); ++i) {
            if (ex[i] < 0 || ex[i] > 30) throw ConfigError("sweep: epsilon exponent out of range for " + e);
            if (i > 0 && ex[i] <= ex[i - 1]) {
                throw ConfigError("sweep: epsilon list for " + e + " must be strictly decreasing");
            }
            if (e == "multilevel" && ex[i] < 2) {
                throw ConfigError("sweep: multilevel needs eps <= 1/4 (L = -log2 eps - 2 >= 0)");
            }
            if (e == "cv") {
                const auto p = schedule_for(*this, e, ex[i], dim);
                if (p.N_r < p.Q) {
                    throw ConfigError("sweep: scaled N_r = " + std::to_string(p.N_r) + " is below Q = " +
                                      std::to_string(p.Q) + " at eps = 2^-" + std::to_string(ex[i]));
                }
            }
        }
    }
}

RunParams schedule_for(const SweepSpec& sweep, const std::string& estimator, int exponent, std::size_t dim) {
    estimator_id(estimator);
    RunParams p;
    p.estimator = estimator;
    p.exponent = exponent;
    p.epsilon = std::ldexp(1.0, -exponent);
    const double inv = std::ldexp(1.0, exponent);
    const double s = sweep.scale;
    if (estimator == "standard" || estimator == "eep") {
        p.N = scaled(s, static_cast<double>(sweep.outer_paths));
        p.N_d = scaled(s, sweep.standard_inner_coef * inv * inv);
    } else if (estimator == "cv") {
        p.N = scaled(s, static_cast<double>(sweep.outer_paths));
        p.N_d = scaled(s, sweep.cv_inner_coef * inv);
        p.N_r = scaled(s, sweep.cv_training_coef * inv);
        p.K = sweep.cv_blocks;
        p.Q = StateBasis(dim, sweep.cv_degree, sweep.cv_include_payoff).size();
    } else {
        const int finest = exponent - 2;
        if (finest < 0) throw ConfigError("multilevel schedule needs eps <= 1/4");
        const std::size_t base = scaled(s, static_cast<double>(sweep.ml_inner_base));
        for (int l = 0; l <= finest; ++l) {
            p.multilevel.inner.push_back(base << (2 * l));
            p.multilevel.outer.push_back(scaled(s, std::ldexp(1.0, sweep.ml_outer_log2 - l)));
        }
        p.levels = p.multilevel.levels();
        p.N = p.multilevel.outer.front();
        p.N_d = p.multilevel.inner.back();
    }
    return p;
}

std::uint64_t run_seed(std::uint64_t master, const std::string& estimator, int exponent, std::size_t replication) {
    const std::uint64_t index = (estimator_id(estimator) << 48) | (static_cast<std::uint64_t>(exponent) << 32) |
                                static_cast<std::uint64_t>(replication);
    return derive_seed(master, Purpose::replication, index);
}

RunRecord run_one(const RunParams& params, std::size_t replication, std::uint64_t seed, const ModelSpec& model,
                  const MaxCallPayoff& payoff, const ValueFunctions& vfun, const SweepSpec& sweep, double ref_value) {
    const auto start = std::chrono::steady_clock::now();
    EstimatorConfig cfg;
    cfg.outer_paths = params.N;
    cfg.inner_samples = params.N_d;
    cfg.exercise_at_zero = sweep.exercise_at_zero;
    cfg.threads = sweep.threads;
    const RunKey key{seed, 0};
    PriceEstimate est;
    if (params.estimator == "standard") {
        est = estimate_dual_standard(model, payoff, vfun, cfg, key);
    } else if (params.estimator == "eep") {
        est = estimate_eep(model, payoff, vfun, cfg, key);
    } else if (params.estimator == "cv") {
        const PathBatch training = simulate_paths(model, params.N_r, seed, Purpose::training, 0);
        const StateBasis basis(model.dim(), sweep.cv_degree, sweep.cv_include_payoff);
        const CVModel cv = fit_cv_coefficients(training, vfun, basis, payoff, params.K, sweep.cv_selection);
        est = estimate_dual_cv(model, payoff, vfun, cv, cfg, key);
    } else {
        cfg.multilevel = params.multilevel;
        est = estimate_multilevel(model, payoff, vfun, cfg, key);
    }
    RunRecord r;
    r.estimator = params.estimator;
    r.epsilon = params.epsilon;
    r.replication = replication;
    r.estimate = est.value;
    r.ref_value = ref_value;
    r.N = params.N;
    r.N_d = params.N_d;
    r.N_r = params.N_r;
    r.K = params.K;
    r.Q = params.Q;
    r.J = model.exercise_count();
    r.levels = params.levels;
    r.euler_steps = est.cost.euler_steps;
    r.inner_sims = est.cost.inner_sims;
    r.regress_flops = est.cost.regress_flops;
    r.wall_seconds = sweep.record_timing
                         ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
                         : 0.0;
    r.seed = seed;
    return r;
}

void run_sweep(const SweepSpec& sweep, const ModelSpec& model, const MaxCallPayoff& payoff,
               const ValueFunctions& vfun, double ref_value, std::uint64_t master_seed,
               std::vector<RunRecord>& records, const std::function<void(const RunRecord&)>& on_record) {
    sweep.validate(model.dim());
    for (const auto& name : sweep.estimators) {
        for (int e : sweep.exponents(name)) {
            const RunParams params = schedule_for(sweep, name, e, model.dim());
            for (std::size_t r = 0; r < sweep.replications; ++r) {
                records.push_back(run_one(params, r, run_seed(master_seed, name, e, r), model, payoff, vfun, sweep,
                                          ref_value));
                if (on_record) on_record(records.back());
            }
        }
    }
}

std::vector<RunRecord> run_sweep(const SweepSpec& sweep, const ModelSpec& model, const MaxCallPayoff& payoff,
                                 const ValueFunctions& vfun, double ref_value, std::uint64_t master_seed) {
    std::vector<RunRecord> records;
    run_sweep(sweep, model, payoff, vfun, ref_value, master_seed, records);
    return records;
}

std::vector<RmseRow> estimate_rmse(const std::vector<RunRecord>& records, double ref_value,
                                   const std::vector<std::pair<std::string, double>>& expected) {
    std::vector<std::pair<std::string, double>> order;
    std::map<std::pair<std::string, double>, std::vector<const RunRecord*>> cells;
    for (const auto& r : records) {
        auto& cell = cells[{r.estimator, r.epsilon}];
        if (cell.empty()) order.emplace_back(r.estimator, r.epsilon);
        cell.push_back(&r);
    }
    std::string problems;
    for (const auto& key : expected) {
        if (!cells.contains(key)) problems += " missing(" + key.first + ", eps=" + format_double(key.second) + ")";
    }
    for (const auto& key : order) {
        if (cells[key].size() < 2) {
            problems += " too-few-replications(" + key.first + ", eps=" + format_double(key.second) + ")";
        }
    }
    if (!problems.empty()) throw ConfigError("estimate_rmse:" + problems);

    std::vector<RmseRow> out;
    for (const auto& key : order) {
        const auto& cell = cells[key];
        const std::size_t n = cell.size();
        std::vector<double> err(n), cost(n);
        for (std::size_t i = 0; i < n; ++i) {
            err[i] = cell[i]->estimate - ref_value;
            cost[i] = static_cast<double>(cell[i]->cost());
        }
        RmseRow row{key.first, key.second};
        row.n_replications = n;
        row.bias = pairwise_sum(err) / static_cast<double>(n);
        std::vector<double> sq(n), dev(n);
        for (std::size_t i = 0; i < n; ++i) {
            sq[i] = err[i] * err[i];
            dev[i] = (err[i] - row.bias) * (err[i] - row.bias);
        }
        row.rmse = std::sqrt(pairwise_sum(sq) / static_cast<double>(n));
        row.stdev = std::sqrt(pairwise_sum(dev) / static_cast<double>(n));
        row.mean_cost = pairwise_sum(cost) / static_cast<double>(n);
        out.push_back(std::move(row));
    }
    return out;
}

SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw ConfigError("fit_loglog_slope: need at least two points");
    const double n = static_cast<double>(points.size());
    double sx = 0.0, sy = 0.0;
    std::vector<double> xs, ys;
    for (const auto& [cost, rmse] : points) {
        if (!(cost > 0.0) || !(rmse > 0.0) || !std::isfinite(cost) || !std::isfinite(rmse)) {
            throw ConfigError("fit_loglog_slope: cost and rmse must be positive and finite");
        }
        xs.push_back(-std::log(rmse));
        ys.push_back(std::log(cost));
        sx += xs.back();
        sy += ys.back();
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw ConfigError("fit_loglog_slope: all rmse values are equal");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.n_points = points.size();
    return fit;
}

std::vector<SlopeRow> slopes_by_estimator(const std::vector<RmseRow>& table) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<double, double>>> pts;
    for (const auto& r : table) {
        if (!pts.contains(r.estimator)) order.push_back(r.estimator);
        pts[r.estimator].emplace_back(r.mean_cost, r.rmse);
    }
    std::vector<SlopeRow> out;
    for (const auto& e : order) out.push_back({e, fit_loglog_slope(pts[e])});
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw ArtifactError("CSV: cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

void write_csv(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << kRunsHeader << '\n';
    for (const auto& r : records) out << row(r);
    check_written(out, path);
}

void append_csv(const RunRecord& record, const std::filesystem::path& path) {
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
    auto out = open_out(path, std::ios::app);
    if (fresh) out << kRunsHeader << '\n';
    out << row(record);
    check_written(out, path);
}

void write_csv(const std::vector<RmseRow>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << kRmseHeader << '\n';
    for (const auto& r : rows) {
        out << r.estimator << ',' << format_double(r.epsilon) << ',' << format_double(r.rmse) << ','
            << format_double(r.bias) << ',' << format_double(r.stdev) << ',' << format_double(r.mean_cost) << ','
            << r.n_replications << '\n';
    }
    check_written(out, path);
}

void write_csv(const std::vector<SlopeRow>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << kSlopesHeader << '\n';
    for (const auto& r : rows) {
        out << r.estimator << ',' << format_double(r.fit.slope) << ',' << format_double(r.fit.intercept) << ','
            << r.fit.n_points << '\n';
    }
    check_written(out, path);
}

std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path) {
    std::vector<RunRecord> out;
    for (const auto& c : read_table(path, kRunsHeader)) {
        RunRecord r;
        r.estimator = c[0];
        r.epsilon = parse_double(c[1]);
        r.replication = parse_uint<std::size_t>(c[2]);
        r.estimate = parse_double(c[3]);
        r.ref_value = parse_double(c[4]);
        r.N = parse_uint<std::size_t>(c[5]);
        r.N_d = parse_uint<std::size_t>(c[6]);
        r.N_r = parse_uint<std::size_t>(c[7]);
        r.K = parse_uint<std::size_t>(c[8]);
        r.Q = parse_uint<std::size_t>(c[9]);
        r.J = parse_uint<std::size_t>(c[10]);
        r.levels = parse_uint<std::size_t>(c[11]);
        r.euler_steps = parse_uint<std::uint64_t>(c[12]);
        r.inner_sims = parse_uint<std::uint64_t>(c[13]);
        r.regress_flops = parse_uint<std::uint64_t>(c[14]);
        r.wall_seconds = parse_double(c[15]);
        r.seed = parse_uint<std::uint64_t>(c[16]);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RmseRow> read_rmse_csv(const std::filesystem::path& path) {
    std::vector<RmseRow> out;
    for (const auto& c : read_table(path, kRmseHeader)) {
        out.push_back({c[0], parse_double(c[1]), parse_double(c[2]), parse_double(c[3]), parse_double(c[4]),
                       parse_double(c[5]), parse_uint<std::size_t>(c[6])});
    }
    return out;
}

std::vector<SlopeRow> read_slopes_csv(const std::filesystem::path& path) {
    std::vector<SlopeRow> out;
    for (const auto& c : read_table(path, kSlopesHeader)) {
        out.push_back({c[0], {parse_double(c[1]), parse_double(c[2]), parse_uint<std::size_t>(c[3])}});
    }
    return out;
}

}  // namespace berm
