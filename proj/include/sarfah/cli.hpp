#pragma once

namespace sarfah {

// Entry point behind the `sarfah` binary. Exit codes: 0 success, 1 user
// error (bad flags, unreadable files, domain violations), 2 internal error.
int cli_main(int argc, const char* const* argv);

}  // namespace sarfah
