#include "cli.hpp"

int main(int argc, char** argv) { return lmlab::cli::run(argc, argv); }
