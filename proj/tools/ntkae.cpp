#include "ntkae/cli.hpp"

int main(int argc, char** argv) { return ntkae::cli::run(argc, argv); }
