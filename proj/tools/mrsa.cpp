// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "mrsa/cli.hpp"

int main(int argc, char** argv) { return mrsa::dispatch(argc, argv, std::cout, std::cerr); }
