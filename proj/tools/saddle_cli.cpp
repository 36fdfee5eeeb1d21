#include "saddle/cli.hpp"

int main(int argc, char** argv) { return saddle::cli::run(argc, argv); }
