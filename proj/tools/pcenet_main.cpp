#include "pcenet/cli.hpp"
#include "pcenet/memory.hpp"

int main(int argc, char** argv) {
  pcenet::tune_allocator();
  return pcenet::cli::run(argc, argv);
}
