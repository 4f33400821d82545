#include "xrdl/cli.hpp"

int main(int argc, char** argv) { return xrdl::run_cli(argc, argv); }
