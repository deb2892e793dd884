#include <iostream>
#include <string>
#include <vector>

#include "trpa_cli/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return trpa::cli::run(args, std::cout, std::cerr);
}
