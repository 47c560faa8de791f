#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
    return herglotz::cli::main_impl(argc, argv, std::cout, std::cerr);
}
