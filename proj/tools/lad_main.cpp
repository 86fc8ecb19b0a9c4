#include "lad/cli.hpp"

int main(int argc, char** argv) { return lad::cli::run(argc, argv); }
