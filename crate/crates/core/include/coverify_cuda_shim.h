// coverify_cuda_shim.h - serial CPU emulation of the CUDA kernel execution
// model for co-verification harnesses. Version 1.
//
// Kernels compile as ordinary host functions. CUDA_LAUNCH runs the kernel body
// once per (block, thread) pair: blocks outer, threads inner, x fastest.
// Device memory aliases host memory. Barriers, shared memory and warp
// intrinsics are not provided.
#ifndef COVERIFY_CUDA_SHIM_H
#define COVERIFY_CUDA_SHIM_H

#define COVERIFY_CUDA_SHIM_VERSION 1

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "coverify_harness.h"

#define __global__
#define __device__
#define __host__
#define __forceinline__ inline
#define __noinline__
#define __launch_bounds__(...)
#define __constant__

struct dim3 {
  unsigned int x, y, z;
  dim3(unsigned int vx = 1, unsigned int vy = 1, unsigned int vz = 1) : x(vx), y(vy), z(vz) {}
};
typedef dim3 uint3;

inline uint3 threadIdx(0, 0, 0);
inline uint3 blockIdx(0, 0, 0);
inline dim3 blockDim(1, 1, 1);
inline dim3 gridDim(1, 1, 1);
constexpr int warpSize = 32;

typedef int cudaError_t;
enum { cudaSuccess = 0, cudaErrorInvalidConfiguration = 9 };
enum cudaMemcpyKind {
  cudaMemcpyHostToHost = 0,
  cudaMemcpyHostToDevice = 1,
  cudaMemcpyDeviceToHost = 2,
  cudaMemcpyDeviceToDevice = 3,
  cudaMemcpyDefault = 4
};
typedef void* cudaStream_t;

template <class T>
inline cudaError_t cudaMalloc(T** ptr, std::size_t size) {
  *ptr = static_cast<T*>(std::calloc(size ? size : 1, 1));
  return *ptr ? cudaSuccess : 2;
}
template <class T>
inline cudaError_t cudaMallocManaged(T** ptr, std::size_t size, unsigned int = 1) {
  return cudaMalloc(ptr, size);
}
template <class T>
inline cudaError_t cudaMallocHost(T** ptr, std::size_t size) {
  return cudaMalloc(ptr, size);
}
inline cudaError_t cudaFree(void* ptr) {
  std::free(ptr);
  return cudaSuccess;
}
inline cudaError_t cudaFreeHost(void* ptr) { return cudaFree(ptr); }
inline cudaError_t cudaMemcpy(void* dst, const void* src, std::size_t n, cudaMemcpyKind) {
  std::memmove(dst, src, n);
  return cudaSuccess;
}
inline cudaError_t cudaMemcpyAsync(void* dst, const void* src, std::size_t n, cudaMemcpyKind k, cudaStream_t = 0) {
  return cudaMemcpy(dst, src, n, k);
}
inline cudaError_t cudaMemset(void* dst, int value, std::size_t n) {
  std::memset(dst, value, n);
  return cudaSuccess;
}
inline cudaError_t cudaDeviceSynchronize() { return cudaSuccess; }
inline cudaError_t cudaThreadSynchronize() { return cudaSuccess; }
inline cudaError_t cudaGetLastError() { return cudaSuccess; }
inline cudaError_t cudaPeekAtLastError() { return cudaSuccess; }
inline const char* cudaGetErrorString(cudaError_t) { return "no error"; }

template <class T, class U>
inline T atomicAdd(T* addr, U v) {
  T old = *addr;
  *addr = old + static_cast<T>(v);
  return old;
}
template <class T, class U>
inline T atomicSub(T* addr, U v) {
  T old = *addr;
  *addr = old - static_cast<T>(v);
  return old;
}
template <class T, class U>
inline T atomicMax(T* addr, U v) {
  T old = *addr;
  if (static_cast<T>(v) > old) *addr = static_cast<T>(v);
  return old;
}
template <class T, class U>
inline T atomicMin(T* addr, U v) {
  T old = *addr;
  if (static_cast<T>(v) < old) *addr = static_cast<T>(v);
  return old;
}
template <class T, class U>
inline T atomicExch(T* addr, U v) {
  T old = *addr;
  *addr = static_cast<T>(v);
  return old;
}

using std::max;
using std::min;
inline float rsqrtf(float x) { return 1.0f / std::sqrt(x); }
inline double rsqrt(double x) { return 1.0 / std::sqrt(x); }
inline float __expf(float x) { return std::exp(x); }
inline float __logf(float x) { return std::log(x); }
inline float __powf(float x, float y) { return std::pow(x, y); }
inline float __fdividef(float x, float y) { return x / y; }
inline float __saturatef(float x) { return x < 0.f ? 0.f : (x > 1.f ? 1.f : x); }
inline int __float2int_rn(float x) { return static_cast<int>(std::nearbyint(x)); }
inline int __float2int_rz(float x) { return static_cast<int>(x); }

namespace coverify {

template <class F>
inline void launch(dim3 grid, dim3 block, F&& body) {
  gridDim = grid;
  blockDim = block;
  for (unsigned int bz = 0; bz < grid.z; ++bz)
    for (unsigned int by = 0; by < grid.y; ++by)
      for (unsigned int bx = 0; bx < grid.x; ++bx) {
        blockIdx = uint3(bx, by, bz);
        for (unsigned int tz = 0; tz < block.z; ++tz)
          for (unsigned int ty = 0; ty < block.y; ++ty)
            for (unsigned int tx = 0; tx < block.x; ++tx) {
              threadIdx = uint3(tx, ty, tz);
              body();
            }
      }
  threadIdx = uint3(0, 0, 0);
  blockIdx = uint3(0, 0, 0);
}

}  // namespace coverify

#define CUDA_LAUNCH(kernel, grid, block, ...) \
  ::coverify::launch(dim3(grid), dim3(block), [&]() { kernel(__VA_ARGS__); })
#define CUDA_LAUNCH_EXT(kernel, grid, block, shmem, stream, ...) \
  ::coverify::launch(dim3(grid), dim3(block), [&]() { kernel(__VA_ARGS__); })

#endif  // COVERIFY_CUDA_SHIM_H
