#pragma once

#include <iosfwd>
#include <string_view>

namespace tridipole::cli {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kNumericalFailure = 3 };

int run(int argc, char** argv, std::ostream& out, std::ostream& err);

/// "2Hz", "0.5 kHz", "2" -> Hz. Throws std::invalid_argument.
double parse_frequency(std::string_view text);
/// "10ms", "1s", "250us", "0.01" -> s. Throws std::invalid_argument.
double parse_duration(std::string_view text);

}  // namespace tridipole::cli
