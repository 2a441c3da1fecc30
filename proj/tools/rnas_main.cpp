#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
    rnas::cli::init_logging();
    return rnas::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
