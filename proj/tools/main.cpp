#include "desyre/cli.hpp"

int main(int argc, char** argv) { return desyre::run_cli(argc, argv); }
