#include "fairrep_cli.hpp"

int main(int argc, char** argv) { return fairrep::cli::run(argc, argv); }
