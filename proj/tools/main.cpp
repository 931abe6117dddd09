#include "vetta/cli/commands.hpp"

int main(int argc, char** argv) { return vetta::cli::run_cli(argc, argv); }
