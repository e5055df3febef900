// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#include "spectracast/cli.hpp"

int main(int argc, char** argv) { return spectracast::cli::dispatch(argc, argv); }
