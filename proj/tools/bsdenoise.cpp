#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return blindspot::cli::run(argc, argv, std::cout, std::cerr); }
