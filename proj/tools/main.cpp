#include <iostream>
#include <string>
#include <vector>

#include "gridloc/cli.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Training churns through large temporaries; keep them off mmap.
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    std::vector<std::string> args(argv + 1, argv + argc);
    return gridloc::dispatch(args, std::cout, std::cerr);
}
