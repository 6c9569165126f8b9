#include "n2n/cli.hpp"

int main(int argc, char** argv) { return n2n::cli::cli_main(argc, argv); }
