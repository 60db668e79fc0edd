#include <iostream>

#include "mhcohort/cli.hpp"

int main(int argc, char** argv) { return mhc::run(argc, argv, std::cout, std::cerr); }
