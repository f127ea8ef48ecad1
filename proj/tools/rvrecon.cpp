#include "rvrecon/cli.hpp"

int main(int argc, char** argv) { return rvrecon::cli::run(argc, argv); }
