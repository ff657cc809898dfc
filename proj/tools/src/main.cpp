#include <iostream>

#include "pftopics/cli.hpp"

int main(int argc, char** argv) { return pftopics::cli::run(argc, argv, std::cout, std::cerr); }
