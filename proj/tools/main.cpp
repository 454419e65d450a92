#include <iostream>

#include "ioff/cli.hpp"

int main(int argc, char** argv) { return ioff::run_cli(argc, argv, std::cout, std::cerr); }
