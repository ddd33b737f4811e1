#include "phpoisson/cli.hpp"

int main(int argc, char** argv) { return phpoisson::cli::run(argc, argv); }
