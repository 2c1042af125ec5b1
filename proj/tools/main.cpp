#include "cli.hpp"

int main(int argc, char** argv) { return asmplan::cli::run(argc, argv); }
