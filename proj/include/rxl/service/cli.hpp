#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rxl::service {

// Exit codes: 0 success, 1 runtime failure, 2 usage or config error. Failures print one JSON
// object {"error": kind, "message": ..., "violations": [...]} to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rxl::service
