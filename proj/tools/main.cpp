#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return dposer::cli::run(argc, argv, std::cout, std::cerr); }
