#include "spsb/cli.hpp"

int main(int argc, char** argv) { return spsb::cli::run_command(argc, argv); }
