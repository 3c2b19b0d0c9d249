#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return streamvb::cli::run(argc, argv, std::cout, std::cerr); }
