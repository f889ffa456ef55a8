#include "geomix/cli.hpp"

int main(int argc, char** argv) { return geomix::run_cli(argc, argv); }
