// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "rmlab/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

namespace rmlab {

std::shared_ptr<spdlog::logger> logger() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto l = std::make_shared<spdlog::logger>(
            "rmlab", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
        return l;
    }();
    return instance;
}

}  // namespace rmlab
