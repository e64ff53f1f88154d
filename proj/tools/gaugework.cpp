#include "gaugework/experiment.hpp"

int main(int argc, char** argv) { return gaugework::cli::main(argc, argv); }
