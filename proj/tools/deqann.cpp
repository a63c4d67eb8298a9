#include <iostream>

#include "deqann/commands.hpp"

int main(int argc, char** argv) {
    return deqann::run_cli(argc, argv, std::cout, std::cerr);
}
