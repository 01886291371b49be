#include <iostream>

#include "mcatlas/cli.hpp"

int main(int argc, char** argv) { return mca::run_cli(argc, argv, std::cout, std::cerr); }
