#pragma once

#include <string>
#include <vector>

#include "pdro/bench.hpp"

namespace pdro {

/// Fixed results schema:
///   scenario,method,n,seed,eps,objective,gen_error,wallclock_ms
/// followed by a "# aggregate" section with mean and sd rows per
/// (scenario, method, n). Numbers carry six significant digits.
std::string render_results(const std::vector<TrialResult>& rows);

void write_results(const std::vector<TrialResult>& rows, const std::string& path);

std::vector<TrialResult> read_results(const std::string& path);

/// Aggregate section alone (exactly the block write_results appends).
std::string render_aggregates(const std::vector<TrialResult>& rows);

/// Rectangular numeric returns file: a header row, a leading date column and
/// one column per asset. percent_units divides every value by 100.
Matrix load_returns_csv(const std::string& path, bool percent_units);

} // namespace pdro
