#pragma once

#include <iosfwd>

namespace mca {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mca
