#pragma once

#include <cstdint>
#include <iosfwd>

namespace led {

// Oracle/invariant suite behind the `selftest` subcommand: denoise/posterior
// identity, schedule endpoints, gradient checks against finite differences,
// and metric brute-force equivalence. Prints one line per check; returns
// true only if all pass.
bool run_selftest(std::ostream& out, std::uint64_t seed);

}  // namespace led
