#include "dtss/cli.hpp"

int main(int argc, char** argv) { return dtss::cli::run(argc, argv); }
