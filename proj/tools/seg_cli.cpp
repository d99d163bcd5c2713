#include <iostream>

#include "seg/cli.hpp"

int main(int argc, char** argv) { return seg::cli_main(argc, argv, std::cout, std::cerr); }
