#include <iostream>
#include <string>
#include <vector>

#include "clarify/app.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    return clarify::app::cli_run(args, std::cin, std::cout, std::cerr);
}
