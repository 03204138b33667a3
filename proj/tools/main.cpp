#include "jspma/harness.hpp"

int main(int argc, char** argv) { return jspma::cli(argc, argv); }
