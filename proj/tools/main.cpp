#include "cli.hpp"

int main(int argc, char** argv) { return mtid::cli::run(argc, argv); }
