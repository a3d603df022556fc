#pragma once

#include <string>

namespace groupforge {

// Shortest round-trip decimal form of a double; deterministic across runs,
// used everywhere CSV or table output carries floating-point values.
std::string format_double(double v);

}  // namespace groupforge
