// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "wadcmsn/cli/commands.hpp"

int main(int argc, char** argv) { return wadcmsn::run_cli(argc, argv, std::cout, std::cerr); }
