#include "copkit/kernels.hpp"

namespace copkit::kernels {

#if defined(__x86_64__)
bool avx2_available() {
    return __builtin_cpu_supports("avx2") != 0;
}
#endif

const Backend& active_backend() {
#if defined(__x86_64__)
    static const Backend& chosen = avx2_available() ? avx2_backend() : scalar_backend();
#else
    static const Backend& chosen = scalar_backend();
#endif
    return chosen;
}

const char* active_backend_name() {
    return active_backend().name;
}

}  // namespace copkit::kernels
