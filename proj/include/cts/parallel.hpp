#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cts {

/// Execution policy for kernels that ship both a straightforward serial
/// reference and an OpenMP implementation. Both produce results that are
/// independent of the thread count; they may differ from each other in the
/// last bits because the parallel kernels reduce in fixed-size chunks.
enum class Exec : std::uint8_t { Serial, Parallel };

inline int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_thread_count(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

template <typename F>
void parallel_for(std::ptrdiff_t n, F&& body) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

/// Sum of per-item contributions, reduced in chunks of `chunk` items whose
/// boundaries do not depend on the number of threads. `item(i, acc)` adds
/// item i's vector contribution into `acc` and returns its scalar part.
/// The result is therefore bit-identical for any thread count.
template <typename ItemFn>
double chunked_reduce(std::size_t n, std::size_t chunk, std::span<double> out, ItemFn&& item) {
    const std::size_t dim = out.size();
    const std::size_t n_chunks = n == 0 ? 0 : (n + chunk - 1) / chunk;
    std::vector<double> partial(n_chunks * dim, 0.0);
    std::vector<double> scalars(n_chunks, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(n_chunks); ++ci) {
        std::span<double> acc(partial.data() + ci * dim, dim);
        double s = 0.0;
        const std::size_t end = std::min(n, (ci + 1) * chunk);
        for (std::size_t i = ci * chunk; i < end; ++i) s += item(i, acc);
        scalars[ci] = s;
    }
    std::fill(out.begin(), out.end(), 0.0);
    double total = 0.0;
    for (std::size_t ci = 0; ci < n_chunks; ++ci) {
        total += scalars[ci];
        const double* p = partial.data() + ci * dim;
        for (std::size_t d = 0; d < dim; ++d) out[d] += p[d];
    }
    return total;
}

}  // namespace cts
