#include "jpa/parallel.hpp"

#include <cstdlib>
#include <string>

namespace jpa {

namespace {
std::atomic<unsigned> g_threads{0};
}

unsigned thread_count() {
    if (const unsigned n = g_threads.load(); n > 0) return n;
    if (const char* env = std::getenv("JPA_THREADS"); env != nullptr && *env != '\0') {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
            // fall through to the hardware default
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void set_thread_count(unsigned n) { g_threads.store(n); }

}  // namespace jpa
