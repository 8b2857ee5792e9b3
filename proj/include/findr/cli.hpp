#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace findr {

/// Entry point shared by the findr executable and the tests. Prints one JSON
/// summary line to `out` on success and a diagnostic to `err` on failure.
/// Exit codes: 0 ok, 2 usage/validation/missing artifact, 3 empty vocabulary,
/// 4 provider or transport failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace findr
