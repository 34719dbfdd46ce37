#include "promises/cli.hpp"

int main(int argc, char** argv) { return promises::cli_run(argc, argv); }
