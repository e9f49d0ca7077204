#include <iostream>
#include <string>
#include <vector>

#include "nar/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return nar::run_cli(args, std::cout, std::cerr);
}
