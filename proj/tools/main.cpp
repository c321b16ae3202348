#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return pretest::cli::run(argc, argv, std::cout, std::cerr); }
