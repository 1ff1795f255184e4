#include "cli.hpp"

int main(int argc, char** argv) { return varconet::cli::dispatch(argc, argv); }
