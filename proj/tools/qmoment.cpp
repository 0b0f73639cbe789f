#include <iostream>

#include "qmoment/cli.hpp"

int main(int argc, char** argv) { return qmoment::run_cli(argc, argv, std::cout, std::cerr); }
