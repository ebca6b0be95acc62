#include "cfirl/cli.hpp"

int main(int argc, char** argv) { return cfirl::run_cli(argc, argv); }
