#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace gridfloor {

/// Runs one pipeline stage. args excludes the program name.
/// Returns 0 on success, 1 on stage failure, 2 on usage errors.
int run_command(const std::vector<std::string>& args, const std::map<std::string, std::string>& env,
                std::ostream& out, std::ostream& err);

}  // namespace gridfloor
