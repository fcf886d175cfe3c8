#include <iostream>

#include "driftnet/cli.hpp"

int main(int argc, char** argv) { return driftnet::cli::dispatch(argc, argv, std::cout, std::cerr); }
