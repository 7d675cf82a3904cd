#pragma once

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#endif

namespace menv {

// Scoped flush-to-zero / denormals-are-zero mode for the calling thread.
// Optimizer moments of inactive units decay geometrically and would
// otherwise spend most of a long run in denormal arithmetic.
class FlushDenormalsScope {
 public:
#if defined(__SSE__) || defined(__x86_64__)
  FlushDenormalsScope() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormalsScope() { _mm_setcsr(saved_); }

 private:
  unsigned int saved_;
#else
  FlushDenormalsScope() = default;
#endif

 public:
  FlushDenormalsScope(const FlushDenormalsScope&) = delete;
  FlushDenormalsScope& operator=(const FlushDenormalsScope&) = delete;
};

}  // namespace menv
