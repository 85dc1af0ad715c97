#include "nlhjb_cli.hpp"

int main(int argc, char** argv) { return nlhjb::cli::main_entry(argc, argv); }
