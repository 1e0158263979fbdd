#include "mg/cli.hpp"

int main(int argc, char** argv) { return mg::cli::run_cli(argc, argv); }
