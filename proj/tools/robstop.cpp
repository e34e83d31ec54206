#include "robstop/expcli.hpp"

int main(int argc, char** argv) { return robstop::cli_main(argc, argv); }
