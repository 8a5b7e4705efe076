#include "coinfer/cli.hpp"

int main(int argc, char** argv) { return coinfer::cli::run(argc, argv); }
