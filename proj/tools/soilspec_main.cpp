#include "soilspec/cli.hpp"

int main(int argc, char** argv) { return soilspec::cli::dispatch(argc, argv); }
