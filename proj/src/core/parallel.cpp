#include "fwi/parallel.hpp"

#include <exception>
#include <vector>

#include <omp.h>

namespace fwi {

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void set_thread_count(int threads) {
    if (threads > 0) omp_set_num_threads(threads);
}

}  // namespace fwi
