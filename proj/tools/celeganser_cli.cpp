#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "celeganser/commands.hpp"

int main(int argc, char** argv) {
  // Large tensors stay on the heap.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  std::vector<std::string> args(argv + 1, argv + argc);
  return celeganser::commands::run(args, std::cout, std::cerr);
}
