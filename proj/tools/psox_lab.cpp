#include "psox/cli.hpp"

int main(int argc, char** argv) { return psox::cli::run_cli(argc, argv); }
