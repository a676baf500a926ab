#ifndef MOPID_CLI_HPP
#define MOPID_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace mopid {

// Runs the command-line interface on the given arguments (program name
// excluded).  Results go to `out`, diagnostics to `err`.  Returns the
// process exit status: 0 on success, 1 when validation or solving fails,
// 2 on I/O or usage errors.
//
// Commands:
//   check <file>
//   solve <file> [--order v1,v2,...] [--no-shortcut] [--report <file>]
//                [--plot <var> <file>]
//   validate <file> --strategy <report> [--samples n] [--seed k]
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mopid

#endif  // MOPID_CLI_HPP
