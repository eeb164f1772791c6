#include <string>
#include <vector>

#include "aqua/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return aqua::cli::dispatch(std::move(args));
}
