#include "urq/cli.hpp"

int main(int argc, char** argv) { return urq::cli::run(argc, argv); }
