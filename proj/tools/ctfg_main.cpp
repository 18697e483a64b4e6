#include "ctfg/cli.hpp"

int main(int argc, char** argv) { return ctfg::cli_main(argc, argv); }
