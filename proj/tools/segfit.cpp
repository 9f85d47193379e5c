#include <iostream>

#include "segfit/cli.hpp"

int main(int argc, char** argv) { return segfit::cli::run(argc, argv, std::cout, std::cerr); }
