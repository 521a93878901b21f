#include "toothsonic/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return toothsonic::run_cli(argc, argv, std::cout, std::cerr); }
