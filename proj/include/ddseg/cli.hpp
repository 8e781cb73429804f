#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace ddseg {

// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4, kExitOther = 1 };

// Entry point of the `ddseg` tool. Output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Fixed 40-entry visualization palette; ids wrap around, 255 maps to black.
std::array<std::uint8_t, 3> palette_color(int id);

// RGB bytes (HWC) of a label map.
std::vector<std::uint8_t> colorize(const std::vector<std::uint8_t>& labels);

}  // namespace ddseg
