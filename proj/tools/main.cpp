#include "cli.hpp"

int main(int argc, char** argv) { return cpk::cli::run(argc, argv); }
