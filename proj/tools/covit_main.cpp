#include <iostream>

#include "covit/cli.hpp"

int main(int argc, char** argv) { return covit::run_cli(argc, argv, std::cout, std::cerr); }
