#pragma once

#include <cstddef>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace glen {

// Every batch kernel takes a policy; `serial` is the reference path, `parallel`
// the OpenMP one. Kernels write results to disjoint per-index slots and reduce
// in ascending index order afterwards, so both policies are bit-identical.
enum class ExecutionPolicy { serial, parallel };

inline int worker_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <typename Fn>
void parallel_for(ExecutionPolicy policy, std::size_t count, Fn&& fn) {
#ifdef _OPENMP
    if (policy == ExecutionPolicy::parallel) {
        std::exception_ptr first_error = nullptr;
        std::size_t first_error_index = count;
#pragma omp parallel for schedule(dynamic)
        for (long long i = 0; i < static_cast<long long>(count); ++i) {
            try {
                fn(static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical(glen_parallel_for_error)
                {
                    if (static_cast<std::size_t>(i) < first_error_index) {
                        first_error_index = static_cast<std::size_t>(i);
                        first_error = std::current_exception();
                    }
                }
            }
        }
        if (first_error) std::rethrow_exception(first_error);
        return;
    }
#endif
    (void)policy;
    for (std::size_t i = 0; i < count; ++i) fn(i);
}

}  // namespace glen
