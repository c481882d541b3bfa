#include "fcac/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return fcac::run_cli(argc, argv, std::cout, std::cerr);
}
