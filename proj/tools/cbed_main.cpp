#include <iostream>

#include "cbed/cli.hpp"

int main(int argc, char** argv) { return cbed::run_cli(argc, argv, std::cout, std::cerr); }
