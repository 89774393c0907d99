#include <iostream>

#include "jointfit/cli.hpp"

int main(int argc, char** argv) { return jointfit::run_cli(argc, argv, std::cout, std::cerr); }
