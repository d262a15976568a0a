#include <iostream>

#include "pmdiag/cli.hpp"

int main(int argc, char** argv) { return pmdiag::cli::run(argc, argv, std::cout, std::cerr); }
