#include <iostream>

#include "upmnet/cli.hpp"

int main(int argc, char** argv) { return upmnet::run_cli(argc, argv, std::cout, std::cerr); }
