#include "ltvs/cli.hpp"

int main(int argc, char** argv) { return ltvs::run_cli(argc, argv); }
