#include "eqgan/cli.hpp"

int main(int argc, char** argv) { return eqgan::cli::run(argc, argv); }
