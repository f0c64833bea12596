#pragma once

#include <exception>
#include <iosfwd>

namespace mriprep::cli {

enum class ExitCode : int { ok = 0, usage = 1, data = 2, numeric = 3 };

// ArgumentError -> usage; NumericError and DomainError -> numeric; any other
// library or filesystem error -> data.
ExitCode exit_code_for(const std::exception& error) noexcept;

// Parses argv, runs one subcommand and returns the process exit code. Normal
// output goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mriprep::cli
