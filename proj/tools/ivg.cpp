#include "ivg/cli.hpp"

int main(int argc, char** argv) { return ivg::cli::run(argc, argv); }
