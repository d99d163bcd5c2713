#ifndef SEG_CLI_HPP
#define SEG_CLI_HPP

#include <iosfwd>

namespace seg {

/// Entry point of the `seg` command line tool. Returns 0 on success, 1 on
/// usage or validation errors and 2 on runtime failures.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace seg

#endif
