#include "lpr/cli.hpp"

int main(int argc, char** argv) {
  return lpr::cli::run(argc, argv);
}
