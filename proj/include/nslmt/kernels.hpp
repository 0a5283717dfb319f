#pragma once

#include <cstddef>
#include <span>
#include <vector>

/// Dense numeric kernels used by the autodiff primitives.
///
/// Every kernel exists twice: `serial::` is the plain reference loop, and
/// `parallel::` distributes independent output rows (or attention groups)
/// over OpenMP threads. Both variants reduce every output element in the
/// same order, so they agree bit-for-bit; the test suite checks this.
namespace nslmt::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend backend);
Backend backend();
int max_threads();

/// Row/key layout of a batched multi-head attention call. Queries are
/// `query_groups * query_len` rows; keys/values are `key_groups * key_len`
/// rows. Query group g attends to key group key_group_of[g], whose first
/// key_valid[kg] rows are real positions.
struct AttentionShape {
  std::size_t dim = 0;
  std::size_t heads = 1;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::vector<std::size_t> key_group_of;
  std::vector<std::size_t> key_valid;
  bool causal = false;

  std::size_t query_groups() const { return key_group_of.size(); }
  std::size_t key_groups() const { return key_valid.size(); }
  std::size_t head_dim() const { return dim / heads; }
};

#define NSLMT_KERNEL_DECLS                                                                                 \
  /* C(MxN) = A(MxK) B(KxN), or += when accumulate */                                                      \
  void gemm_nn(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,                     \
               std::span<const double> B, std::span<double> C, bool accumulate);                           \
  /* C(MxN) = A(MxK) B(NxK)^T */                                                                           \
  void gemm_nt(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,                     \
               std::span<const double> B, std::span<double> C, bool accumulate);                           \
  /* C(MxN) = A(KxM)^T B(KxN) */                                                                           \
  void gemm_tn(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,                     \
               std::span<const double> B, std::span<double> C, bool accumulate);                           \
  void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in, std::span<double> out);  \
  void log_softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> in,                    \
                        std::span<double> out);                                                            \
  /* out = gain * (x - mean) * rstd + bias per row; writes per-row mean and rstd */                        \
  void layer_norm(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> gain, \
                  std::span<const double> bias, double eps, std::span<double> out, std::span<double> mean,   \
                  std::span<double> rstd);                                                                 \
  /* probs: query_groups * heads * query_len * key_len */                                                  \
  void attention_forward(const AttentionShape& shape, std::span<const double> q, std::span<const double> k, \
                         std::span<const double> v, std::span<double> out, std::span<double> probs);       \
  /* Accumulates into dq, dk and dv (each may be empty to skip). */                                        \
  void attention_backward(const AttentionShape& shape, std::span<const double> q, std::span<const double> k, \
                          std::span<const double> v, std::span<const double> probs,                        \
                          std::span<const double> dout, std::span<double> dq, std::span<double> dk,        \
                          std::span<double> dv);

namespace serial {
NSLMT_KERNEL_DECLS
}  // namespace serial

namespace parallel {
NSLMT_KERNEL_DECLS
}  // namespace parallel

// Dispatch on the active backend.
NSLMT_KERNEL_DECLS

#undef NSLMT_KERNEL_DECLS

}  // namespace nslmt::kernels
