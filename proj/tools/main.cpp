#include "cli.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    using namespace dynabench::cli;
    std::optional<InfoRequest> info;
    RunConfig cfg;
    try {
        cfg = parse_config({argv + 1, argv + argc}, std::getenv("DYNABENCH_SEED"), &info);
    } catch (const UsageError& e) {
        std::cerr << "dynabench: " << e.what() << "\nrun 'dynabench --help' for usage\n";
        return 1;
    }
    if (info) {
        std::cout << info->text;
        return 0;
    }
    return execute(cfg, std::cerr).status;
}
