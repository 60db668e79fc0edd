#pragma once

#include <iosfwd>

#include "mhcohort/config.hpp"

namespace mhc {

// Runs one command; returns the process exit status (0, or the ErrorKind code).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_config(const RunConfig& cfg, std::ostream& out);

}  // namespace mhc
