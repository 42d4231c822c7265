#include <iostream>

#include "nggirt/cli.hpp"

int main(int argc, char** argv) { return nggirt::run_cli(argc, argv, std::cout, std::cerr); }
