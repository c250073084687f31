#include <string>
#include <vector>

#include "milasc/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return milasc::run_cli(args);
}
