#include "msbdl/cli.hpp"

int main(int argc, char** argv) { return msbdl::cli::run(argc, argv); }
