#pragma once

#include <cstddef>
#include <functional>

namespace n2n {

// Worker count: min(hardware, SDF_N2N_THREADS) with SDF_N2N_THREADS read once.
// Always >= 1.
std::size_t worker_count();

// Runs fn(chunk_index, begin, end) over [0, n) split into worker_count()
// fixed contiguous chunks. Chunk boundaries depend only on n and the worker
// count, so per-chunk accumulations can be reduced in chunk order for a
// deterministic result. Serial when n is small or only one worker exists.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace n2n
