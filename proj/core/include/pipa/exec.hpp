#pragma once

namespace pipa {

/// Per-thread execution knobs for the heavy kernels. `f32_compute` runs the
/// matrix/convolution inner loops in single precision (values are still held
/// in doubles); `threads` splits output rows across worker threads. Both are
/// deterministic: every output element sees the same arithmetic order
/// regardless of the thread count.
struct ExecContext {
  bool f32_compute = false;
  int threads = 1;
  /// When set, newly created op nodes skip graph recording entirely.
  bool no_grad = false;
};

ExecContext& exec_context();

/// RAII scope for temporarily overriding the execution context.
class ExecGuard {
 public:
  explicit ExecGuard(ExecContext ctx) : saved_(exec_context()) { exec_context() = ctx; }
  ~ExecGuard() { exec_context() = saved_; }
  ExecGuard(const ExecGuard&) = delete;
  ExecGuard& operator=(const ExecGuard&) = delete;

 private:
  ExecContext saved_;
};

namespace detail {

// C[M x N] += A[M x K] * B[K x N], all row-major.
void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c);
// C[M x N] += A[K x M]^T * B[K x N]
void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c);
// C[M x N] += A[M x K] * B[N x K]^T
void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c);

}  // namespace detail

}  // namespace pipa
