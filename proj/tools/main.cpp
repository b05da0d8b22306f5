#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "trilab/cli.hpp"

namespace {

void print_usage() {
    std::cerr << "usage: trilab <subcommand> [--key value ...] [--config FILE]\n"
              << "subcommands:\n";
    for (const auto& name : trilab::cli::task_names()) std::cerr << "  " << name << "\n";
    std::cerr << "Flags override config-file keys. Outputs land in --out_dir (default .).\n";
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (!args.empty() && (args[0] == "-h" || args[0] == "--help")) {
        print_usage();
        return 0;
    }
    try {
        trilab::cli::RunConfig config = trilab::cli::parse_args(args);
        return trilab::cli::run(config);
    } catch (const trilab::InvariantError& err) {
        std::cerr << "invariant violation: " << err.what() << "\n";
        return 2;
    } catch (const trilab::ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        if (args.empty()) print_usage();
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}
