#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "hybens/grid.hpp"

namespace hybens {

// Shortest decimal form that round-trips the exact double.
std::string format_double(double v);

// Field snapshot CSV: one '# axisK=...' header line per axis followed by
// one 'i0,i1,...,value' row per point in row-major order.
void write_field_csv(std::ostream& os, const Field& f);
void write_field_csv(const std::filesystem::path& path, const Field& f);

Field read_field_csv(std::istream& is);
Field read_field_csv(const std::filesystem::path& path);

}  // namespace hybens
