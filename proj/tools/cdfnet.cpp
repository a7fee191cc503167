#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "cdfnet/commands.hpp"

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep large activation buffers in the heap instead of mapping them anew each step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return cdfnet::cli::run(argc, argv, std::cout, std::cerr);
}
