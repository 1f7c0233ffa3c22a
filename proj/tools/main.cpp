#include "nusr/cli.hpp"

int main(int argc, char** argv) {
    return nusr::run_cli(argc, argv);
}
