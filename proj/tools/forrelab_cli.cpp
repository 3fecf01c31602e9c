#include "forrelab/cli.hpp"

int main(int argc, char** argv) { return forrelab::cli_main(argc, argv); }
