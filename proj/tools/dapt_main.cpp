#include "dapt/cli.hpp"

int main(int argc, char** argv) { return dapt::run_cli(argc, argv); }
