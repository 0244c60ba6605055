#include "dida/cli.hpp"

int main(int argc, char** argv) { return dida::cli_main(argc, argv); }
