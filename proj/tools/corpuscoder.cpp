#include <iostream>

#include "corpuscoder/cli.hpp"

int main(int argc, char** argv) { return corpuscoder::cli::run(argc, argv, std::cout, std::cerr); }
