#pragma once

#include <stdexcept>
#include <string>

namespace berm {

/// Invalid or inconsistent user input (config, schedule, sizes). CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model blow-up, failed decomposition, non-finite results. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing, corrupt or wrong-version artifact file. CLI exit code 4.
class ArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace berm
