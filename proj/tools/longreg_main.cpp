#include "longreg/cli.hpp"

int main(int argc, char** argv) { return longreg::cli::run(argc, argv); }
