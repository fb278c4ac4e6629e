#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pivotreg {

// Batch entry point. Subcommands: ingest, fit, correct, bayes, report, serve.
// Returns 0 on success, 1 on validation/runtime errors, 2 on usage errors.
// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace pivotreg
