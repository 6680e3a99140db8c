#include "pipa/exec.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace pipa {

ExecContext& exec_context() {
  thread_local ExecContext ctx;
  return ctx;
}

namespace detail {
namespace {

// Splits [0, m) into contiguous row blocks, one per worker. Each output row
// is written by exactly one thread with a fixed inner-loop order, so results
// do not depend on the partition.
template <typename Fn>
void parallel_rows(int m, const Fn& fn) {
  const int want = exec_context().threads;
  if (want <= 1 || m < 32) {
    fn(0, m);
    return;
  }
  const int nt = std::min(want, m);
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(nt) - 1);
  const int chunk = (m + nt - 1) / nt;
  for (int t = 1; t < nt; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(m, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(0, std::min(chunk, m));
  for (auto& w : workers) w.join();
}

template <typename T>
void kernel_nn(int lo, int hi, int k, int n, const T* a, const T* b, T* c) {
  for (int i = lo; i < hi; ++i) {
    T* crow = c + static_cast<size_t>(i) * n;
    const T* arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void kernel_tn(int lo, int hi, int k, int m, int n, const T* a, const T* b, T* c) {
  // C[i,:] += sum_p A[p,i] * B[p,:]; i-outer keeps writes disjoint per thread.
  for (int i = lo; i < hi; ++i) {
    T* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = a[static_cast<size_t>(p) * m + i];
      const T* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void kernel_nt(int lo, int hi, int k, int n, const T* a, const T* b, T* c) {
  for (int i = lo; i < hi; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<size_t>(j) * k;
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

std::vector<float>& scratch(int which, size_t n) {
  thread_local std::vector<float> bufs[3];
  auto& v = bufs[which];
  if (v.size() < n) v.resize(n);
  return v;
}

void to_f32(const double* src, float* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(src[i]);
}

}  // namespace

void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c) {
  if (exec_context().f32_compute) {
    auto& af = scratch(0, static_cast<size_t>(m) * k);
    auto& bf = scratch(1, static_cast<size_t>(k) * n);
    auto& cf = scratch(2, static_cast<size_t>(m) * n);
    to_f32(a, af.data(), static_cast<size_t>(m) * k);
    to_f32(b, bf.data(), static_cast<size_t>(k) * n);
    std::fill_n(cf.data(), static_cast<size_t>(m) * n, 0.0f);
    parallel_rows(m, [&](int lo, int hi) { kernel_nn<float>(lo, hi, k, n, af.data(), bf.data(), cf.data()); });
    for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] += static_cast<double>(cf[i]);
    return;
  }
  parallel_rows(m, [&](int lo, int hi) { kernel_nn<double>(lo, hi, k, n, a, b, c); });
}

void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c) {
  if (exec_context().f32_compute) {
    auto& af = scratch(0, static_cast<size_t>(k) * m);
    auto& bf = scratch(1, static_cast<size_t>(k) * n);
    auto& cf = scratch(2, static_cast<size_t>(m) * n);
    to_f32(a, af.data(), static_cast<size_t>(k) * m);
    to_f32(b, bf.data(), static_cast<size_t>(k) * n);
    std::fill_n(cf.data(), static_cast<size_t>(m) * n, 0.0f);
    parallel_rows(m, [&](int lo, int hi) { kernel_tn<float>(lo, hi, k, m, n, af.data(), bf.data(), cf.data()); });
    for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] += static_cast<double>(cf[i]);
    return;
  }
  parallel_rows(m, [&](int lo, int hi) { kernel_tn<double>(lo, hi, k, m, n, a, b, c); });
}

void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c) {
  if (exec_context().f32_compute) {
    auto& af = scratch(0, static_cast<size_t>(m) * k);
    auto& bf = scratch(1, static_cast<size_t>(n) * k);
    auto& cf = scratch(2, static_cast<size_t>(m) * n);
    to_f32(a, af.data(), static_cast<size_t>(m) * k);
    to_f32(b, bf.data(), static_cast<size_t>(n) * k);
    std::fill_n(cf.data(), static_cast<size_t>(m) * n, 0.0f);
    parallel_rows(m, [&](int lo, int hi) { kernel_nt<float>(lo, hi, k, n, af.data(), bf.data(), cf.data()); });
    for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] += static_cast<double>(cf[i]);
    return;
  }
  parallel_rows(m, [&](int lo, int hi) { kernel_nt<double>(lo, hi, k, n, a, b, c); });
}

}  // namespace detail
}  // namespace pipa
