#pragma once

#include "groupforge/policy.hpp"

#include <filesystem>

namespace groupforge {

// Versioned JSON dump of kind, dims, vocabulary and parameter arrays.
// Round-trips exactly at 64-bit precision; table rows are written in
// sorted key order so equal models serialize byte-identically.
void save_policy(const PolicyModel& p, const std::filesystem::path& path);
PolicyModel load_policy(const std::filesystem::path& path);

}  // namespace groupforge
