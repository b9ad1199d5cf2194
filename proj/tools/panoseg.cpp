#include <iostream>

#include "panoseg/cli/commands.hpp"

int main(int argc, char** argv) { return panoseg::cli::run_cli(argc, argv, std::cout, std::cerr); }
