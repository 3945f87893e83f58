#pragma once

namespace rfnet {

// Worker-thread cap for the OpenMP kernels. Defaults to 1; RFNET_THREADS
// raises it. Every kernel writes disjoint output elements per iteration,
// so results are identical for any thread count.
void set_threads(int n);
int threads();
int threads_from_env();

}  // namespace rfnet
