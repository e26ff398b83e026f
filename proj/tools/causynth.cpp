#include "causynth/cli.hpp"

int main(int argc, char** argv) { return causynth::cli::run_cli(argc, argv); }
