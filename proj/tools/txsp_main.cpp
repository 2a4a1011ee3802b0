#include <iostream>

#include "txsp/cli.hpp"

int main(int argc, char** argv) { return txsp::run_cli(argc, argv, std::cout, std::cerr); }
