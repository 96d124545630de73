#pragma once

#include <string>
#include <vector>

#include "cfms/core.hpp"

namespace cfms {

// Dataset files: comma-separated, one header row of item names, one row per
// observation, decimal-point reals, no quoting. Ragged rows, empty fields and
// non-numeric entries are rejected with the line number.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const Dataset& data, const std::string& path);

// Generic numeric table (used by the histogram and draw exports).
void write_table_csv(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows);

std::string format_double(double v);  // shortest round-trip form

}  // namespace cfms
