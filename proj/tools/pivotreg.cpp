#include "pivotreg/cli.hpp"

int main(int argc, char** argv) { return pivotreg::run_cli(argc, argv); }
