// Copyright (c) 2026, rmlab developers
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char** argv) { return rmlab::cli::dispatch(argc, argv); }
