#include <iostream>

#include "decloss/cli.hpp"

int main(int argc, char** argv) { return decloss::run_cli(argc, argv, std::cout, std::cerr); }
