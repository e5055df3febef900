// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace spectracast::cli {

// Entry point behind the `spectracast` binary. Parses argv, runs one
// subcommand, and maps failures to a single-line `error: <category>: ...`
// on stderr. Exit codes: 0 success, 1 validation/runtime failure, 2 usage.
int dispatch(int argc, const char* const* argv);

}  // namespace spectracast::cli
