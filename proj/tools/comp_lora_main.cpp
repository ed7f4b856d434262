#include <iostream>

#include "complora/cli.hpp"

int main(int argc, char** argv) { return complora::run_cli(argc, argv, std::cout, std::cerr); }
