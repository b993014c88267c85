#include "sarfah/cli.hpp"

int main(int argc, char** argv) { return sarfah::cli_main(argc, argv); }
