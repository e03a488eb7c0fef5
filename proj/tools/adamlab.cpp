#include <iostream>

#include "adamlab/cli.hpp"

int main(int argc, char** argv) { return adamlab::run_cli(argc, argv, std::cout, std::cerr); }
