#include "reid/cli.hpp"

int main(int argc, char** argv) { return reid::run_cli(argc, argv); }
