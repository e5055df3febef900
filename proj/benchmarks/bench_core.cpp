// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>
#include "spectracast/ops.hpp"
int main(int argc, char** argv) { ::benchmark::Initialize(&argc, argv); ::benchmark::RunSpecifiedBenchmarks(); return 0; }
