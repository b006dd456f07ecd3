// coverify_harness.h - generic call-and-print wrapper for co-verification
// harnesses. Version 1.
//
// COVERIFY_WRAPPER(fn, args...) calls fn exactly once and prints one line:
//
//   Return value: <V> Arguments after function call: (<A1>, ..., <Ak>)
//
// Arrays are printed element-wise as "[ e1, e2 ]" using their static extent,
// scalars directly, floating values with 6 significant digits.
#ifndef COVERIFY_HARNESS_H
#define COVERIFY_HARNESS_H

#define COVERIFY_HARNESS_VERSION 1

#include <cfloat>
#include <climits>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <type_traits>
#include <utility>
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

namespace coverify {

template <class T>
inline void print_value(std::ostream& os, const T& v) {
  using U = typename std::decay<T>::type;
  if constexpr (std::is_same<U, bool>::value) {
    os << (v ? 1 : 0);
  } else if constexpr (std::is_same<U, char>::value || std::is_same<U, signed char>::value ||
                       std::is_same<U, unsigned char>::value) {
    os << static_cast<int>(v);
  } else if constexpr (std::is_arithmetic<U>::value || std::is_enum<U>::value) {
    os << v;
  } else if constexpr (std::is_pointer<U>::value) {
    os << (v == nullptr ? "null" : "<ptr>");
  } else {
    os << "<value>";
  }
}

template <class T, std::size_t N>
inline void print_value(std::ostream& os, const T (&arr)[N]) {
  os << "[ ";
  for (std::size_t i = 0; i < N; ++i) {
    if (i) os << ", ";
    print_value(os, arr[i]);
  }
  os << " ]";
}

inline void print_args(std::ostream&) {}

template <class A>
inline void print_args(std::ostream& os, const A& a) {
  print_value(os, a);
}

template <class A, class B, class... Rest>
inline void print_args(std::ostream& os, const A& a, const B& b, const Rest&... rest) {
  print_value(os, a);
  os << ", ";
  print_args(os, b, rest...);
}

template <class F, class... Args>
inline void call_and_print(F&& call, Args&&... args) {
  std::ostream& os = std::cout;
  if constexpr (std::is_void<decltype(call(args...))>::value) {
    call(args...);
    os << "Return value: void";
  } else {
    auto ret = call(args...);
    os << "Return value: ";
    print_value(os, ret);
  }
  os << " Arguments after function call: (";
  print_args(os, args...);
  os << ")" << std::endl;
}

inline void begin_case(int k) {
  std::cout << "=== CASE " << k << " ===" << std::endl;
}

inline void end_case(int k) {
  std::cout << "=== END " << k << " ===" << std::endl;
}

}  // namespace coverify

// The callee is named directly inside a generic lambda so default arguments
// and overloads resolve as in an ordinary call.
#define COVERIFY_WRAPPER(fn, ...) \
  ::coverify::call_and_print([&](auto&&... coverify_args) -> decltype(auto) { return fn(coverify_args...); }, __VA_ARGS__)
#define COVERIFY_WRAPPER0(fn) ::coverify::call_and_print([&]() -> decltype(auto) { return fn(); })

#endif  // COVERIFY_HARNESS_H
