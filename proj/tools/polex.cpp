#include "polex/cli.hpp"

int main(int argc, char** argv) { return polex::cli::run(argc, argv); }
