// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mdmixer {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // gradcheck over tolerance or an unexpected error
  kExitUsage = 2,    // config, data, shape or index errors
  kExitDivergence = 3,
};

/// Entry point of the command line tool: train, eval, forecast, gradcheck,
/// export-weights. Never throws; errors become a message on `err` and an exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdmixer
