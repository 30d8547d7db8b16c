#pragma once

#include <string>

namespace raresynth {

// Writes to <path>.tmp in the same directory, then renames onto path, so a
// partially written file is never observable at the final location.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Six-significant-digit float formatting used by every CSV emitter.
std::string format_sig6(double v);

}  // namespace raresynth
