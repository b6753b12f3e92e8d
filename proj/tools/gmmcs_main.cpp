#include "commands.hpp"

int main(int argc, char** argv) { return gmmcs::cli::run_cli(argc, argv); }
