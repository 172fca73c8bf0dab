#include "tagemb/cli.hpp"

int main(int argc, char** argv) { return tagemb::run_cli(argc, argv); }
