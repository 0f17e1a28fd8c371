#include <iostream>

#include "clusterdr/cli.hpp"

int main(int argc, char** argv)
{
    return clusterdr::cli::run(argc, argv, std::cout, std::cerr);
}
