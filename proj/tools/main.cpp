#include "fehmm/cli.hpp"

int main(int argc, char** argv) { return fehmm::cli::run_cli(argc, argv); }
