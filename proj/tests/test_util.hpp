#pragma once

// assert-style checks that survive NDEBUG builds.

#include <cmath>
#include <cstdio>
#include <cstdlib>

inline int g_checks = 0;

#define CHECK(cond)                                                                         \
    do {                                                                                    \
        ++g_checks;                                                                         \
        if (!(cond)) {                                                                      \
            std::fprintf(stderr, "%s:%d: CHECK failed: %s\n", __FILE__, __LINE__, #cond);   \
            std::abort();                                                                   \
        }                                                                                   \
    } while (0)

#define CHECK_NEAR(a, b, tol)                                                               \
    do {                                                                                    \
        ++g_checks;                                                                         \
        double va_ = (a), vb_ = (b);                                                        \
        if (!(std::abs(va_ - vb_) <= (tol))) {                                              \
            std::fprintf(stderr, "%s:%d: CHECK_NEAR failed: %s = %.17g vs %s = %.17g\n",    \
                         __FILE__, __LINE__, #a, va_, #b, vb_);                             \
            std::abort();                                                                   \
        }                                                                                   \
    } while (0)

#define CHECK_THROWS(expr, expected_code)                                                   \
    do {                                                                                    \
        ++g_checks;                                                                         \
        bool caught_ = false;                                                               \
        try {                                                                               \
            expr;                                                                           \
        } catch (const voltmesh::Error& e_) {                                               \
            caught_ = (e_.code() == (expected_code));                                       \
        }                                                                                   \
        if (!caught_) {                                                                     \
            std::fprintf(stderr, "%s:%d: expected error %s from %s\n", __FILE__, __LINE__,  \
                         #expected_code, #expr);                                            \
            std::abort();                                                                   \
        }                                                                                   \
    } while (0)

inline int test_done(const char* name) {
    std::printf("%s: %d checks passed\n", name, g_checks);
    return 0;
}
