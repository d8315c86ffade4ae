#include "cli.hpp"

int main(int argc, char** argv) { return fmdroid::cli::main(argc, argv); }
