#include "cli.hpp"

int main(int argc, char** argv) { return ewmlab::cli_main(argc, argv); }
