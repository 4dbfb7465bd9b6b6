#include <iostream>
#include <string>
#include <vector>

#include "switchtree/cli.hpp"

int main(int argc, char** argv) {
    return switchtree::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout,
                               std::cerr);
}
