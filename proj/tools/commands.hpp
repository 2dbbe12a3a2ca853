#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dgn/error.hpp"
#include "dgn/linalg.hpp"
#include "dgn/losses.hpp"

namespace dgn::cli {

/// Exit codes: 0 success, 1 internal invariant violation, 2 parse or config
/// error, 3 data or dimension error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

int exit_code_for(ErrorKind kind);

/// args excludes the program name. Diagnostics go to err, summaries to out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Whitespace-separated floats, one row per line; blank lines are skipped.
/// A ragged or non-numeric line raises ParseError naming its line.
Matrix read_matrix(const std::filesystem::path& path);

/// `index class` pairs, one per line.
SparseLabels read_labels(const std::filesystem::path& path, Eigen::Index num_points, int num_classes);

/// One integer per line.
std::vector<int> read_label_column(const std::filesystem::path& path);

}  // namespace dgn::cli
