#include "rfnet/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rfnet {

namespace {
int g_threads = 1;
}

void set_threads(int n) {
    g_threads = std::max(1, n);
#ifdef _OPENMP
    omp_set_num_threads(g_threads);
#endif
}

int threads() { return g_threads; }

int threads_from_env() {
    const char* env = std::getenv("RFNET_THREADS");
    if (!env) return 1;
    try {
        return std::max(1, std::stoi(env));
    } catch (...) {
        return 1;
    }
}

}  // namespace rfnet
