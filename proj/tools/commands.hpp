#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cfn/data.hpp"
#include "cfn/eval.hpp"

namespace cfn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

/// Entry point shared by the `cfn` binary and the CLI tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Contents of a directory written by `cfn ingest`.
struct DataDir {
  RatingDataset dataset;
  SideSources sides;
};

DataDir load_data_dir(const std::filesystem::path& dir);

}  // namespace cfn::cli
