#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "berm/harness.hpp"
#include "berm/model.hpp"
#include "berm/regress.hpp"

namespace berm {

/// Dialect version this build reads; files must declare it in [format].
inline constexpr int kConfigVersion = 1;

struct FitSettings {
    std::size_t tv_degree = 2;
    bool tv_include_payoff = true;
    std::size_t training_paths = 50000;
    std::size_t cv_blocks = 1;
    HermiteSelection cv_selection = HermiteSelection::blocks;
    std::size_t cv_degree = 1;
    bool cv_include_payoff = true;
    std::size_t cv_training_paths = 4096;
};

struct EstimatorSettings {
    std::size_t outer_paths = 1000;
    std::size_t inner_samples = 1000;
    bool exercise_at_zero = false;
    std::size_t ml_finest = 1;  ///< L; levels 0..L
    std::size_t ml_inner_base = 48;
    std::size_t ml_outer_base = 65536;
    std::size_t lower_paths = 50000;
    std::size_t reference_replications = 10;
    std::size_t reference_outer = 5000;
    std::size_t reference_inner = 5000;
};

struct OutputSettings {
    std::string value_functions = "value_functions.json";
    std::string cv_model = "cv_model.json";
    std::string reference = "reference.json";
    std::string prices = "prices.csv";
    std::string runs = "runs.csv";
    std::string rmse = "rmse.csv";
    std::string slopes = "slopes.csv";
};

struct Config {
    ModelSpec::Params model;
    double strike = 100.0;
    FitSettings fit;
    EstimatorSettings estimator;
    SweepSpec sweep;
    std::uint64_t seed = 20170901;
    OutputSettings output;

    ModelSpec model_spec() const { return ModelSpec(model); }
    MaxCallPayoff payoff() const { return MaxCallPayoff{strike}; }
    EstimatorConfig estimator_config(unsigned threads) const;
};

/// One recognised key, for validation and --help.
struct ConfigKey {
    std::string section;
    std::string name;
    std::string unit;
    std::string description;
};

const std::vector<ConfigKey>& config_keys();
std::string config_help();

/// Parses and validates; every failure (syntax, unknown key, bad value,
/// invalid model or schedule) is a ConfigError naming the source.
Config parse_config(const std::string& text, const std::string& source = "<string>");
Config load_config(const std::filesystem::path& path);

}  // namespace berm
