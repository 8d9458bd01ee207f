// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace rmlab {

/// Shared stderr logger; stdout is left to callers.
std::shared_ptr<spdlog::logger> logger();

}  // namespace rmlab
