#include "treeloc/cli.hpp"

int main(int argc, char** argv) { return treeloc::cli::main_entry(argc, argv); }
