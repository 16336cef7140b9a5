#include "vburst/cli.hpp"

int main(int argc, char** argv) { return vburst::run_cli(argc, argv); }
