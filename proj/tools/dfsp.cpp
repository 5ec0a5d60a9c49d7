#include <iostream>
#include <string>
#include <vector>

#include "dfsp/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dfsp::run_cli(args, std::cout, std::cerr);
}
