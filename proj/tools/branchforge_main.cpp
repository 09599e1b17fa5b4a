// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#include "branchforge/cli.hpp"

int main(int argc, char** argv) { return branchforge::run_cli(argc, argv); }
