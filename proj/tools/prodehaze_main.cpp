#include "prodehaze/pipeline/cli.hpp"

int main(int argc, char** argv) { return prodehaze::pipeline::run_cli(argc, argv); }
