#include <exception>
#include <iostream>

#include "ddseg/cli.hpp"

int main(int argc, char** argv) {
    try {
        return ddseg::run_cli(argc, argv, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ddseg::kExitOther;
    }
}
