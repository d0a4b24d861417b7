#pragma once

#include <filesystem>

#include "berm/harness.hpp"
#include "berm/regress.hpp"

namespace berm {

/// Artifact schema version written and accepted by this build.
inline constexpr int kArtifactVersion = 1;

// JSON files with a "format" tag and a "version" field. Loading a missing,
// malformed, mistagged or wrong-version file throws ArtifactError.
void save_value_functions(const ValueFunctions& vfun, const std::filesystem::path& path);
ValueFunctions load_value_functions(const std::filesystem::path& path);

void save_cv_model(const CVModel& cv, const std::filesystem::path& path);
CVModel load_cv_model(const std::filesystem::path& path);

void save_reference(const ReferencePrice& ref, const std::filesystem::path& path);
ReferencePrice load_reference(const std::filesystem::path& path);

}  // namespace berm
