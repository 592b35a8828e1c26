#include "rfextra/harness.hpp"

int main(int argc, char** argv) { return rfextra::cli_main(argc, argv); }
