#pragma once

// Minimal always-on check harness shared by the test mains. Never compiled
// out in Release; a failed CHECK keeps going so one run reports everything,
// a failed REQUIRE aborts the binary.

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace harness {

inline int g_checks = 0;
inline int g_failures = 0;

inline int summary(const char* suite) {
    if (g_failures == 0) {
        std::printf("[PASS] %s: %d checks\n", suite, g_checks);
        return 0;
    }
    std::printf("[FAIL] %s: %d of %d checks failed\n", suite, g_failures, g_checks);
    return 1;
}

}  // namespace harness

#define CHECK(cond)                                                         \
    do {                                                                    \
        ++harness::g_checks;                                                \
        if (!(cond)) {                                                      \
            ++harness::g_failures;                                          \
            std::printf("[FAIL] %s:%d  %s\n", __FILE__, __LINE__, #cond);   \
        }                                                                   \
    } while (0)

#define CHECK_NEAR(a, b, tol)                                               \
    do {                                                                    \
        ++harness::g_checks;                                                \
        const double a_ = (a), b_ = (b), tol_ = (tol);                      \
        if (!(std::fabs(a_ - b_) <= tol_)) {                                \
            ++harness::g_failures;                                          \
            std::printf("[FAIL] %s:%d  |%s - %s| = %.3e > %.3e  (%.17g vs %.17g)\n", \
                        __FILE__, __LINE__, #a, #b, std::fabs(a_ - b_),     \
                        tol_, a_, b_);                                      \
        }                                                                   \
    } while (0)

#define REQUIRE(cond)                                                       \
    do {                                                                    \
        ++harness::g_checks;                                                \
        if (!(cond)) {                                                      \
            std::printf("[FAIL] %s:%d  %s (fatal)\n", __FILE__, __LINE__, #cond); \
            std::exit(1);                                                   \
        }                                                                   \
    } while (0)

#define CHECK_THROWS(ExType, expr)                                          \
    do {                                                                    \
        ++harness::g_checks;                                                \
        bool caught_ = false;                                               \
        try {                                                               \
            (void)(expr);                                                   \
        } catch (const ExType&) {                                           \
            caught_ = true;                                                 \
        } catch (...) {                                                     \
        }                                                                   \
        if (!caught_) {                                                     \
            ++harness::g_failures;                                          \
            std::printf("[FAIL] %s:%d  expected %s from %s\n", __FILE__,    \
                        __LINE__, #ExType, #expr);                          \
        }                                                                   \
    } while (0)
