// Copyright 2026 The Spectracast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace spectracast {

inline constexpr const char* kToolName = "spectracast";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace spectracast
