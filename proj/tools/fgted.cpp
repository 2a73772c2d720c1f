#include "fgted/cli/commands.hpp"

int main(int argc, char** argv) { return fgted::cli::dispatch(argc, argv); }
