#include "ulmw/cli.hpp"

int main(int argc, char** argv) { return ulmw::cli::run_cli(argc, argv); }
