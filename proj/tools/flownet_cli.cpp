#include "flownet/cli.hpp"

int main(int argc, char** argv) { return flownet::cli::main(argc, argv); }
