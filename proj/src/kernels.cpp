#include "nslmt/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#ifdef NSLMT_HAVE_OPENMP
#include <omp.h>
#endif

namespace nslmt::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::parallel};

constexpr std::size_t kParallelWork = 1u << 15;

using idx = long long;

template <bool Parallel>
void gemm_nn_impl(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,
                  std::span<const double> B, std::span<double> C, bool accumulate) {
  const double* a = A.data();
  const double* b = B.data();
  double* c = C.data();
  const bool par = Parallel && M * N * K >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (idx i = 0; i < static_cast<idx>(M); ++i) {
    double* crow = c + i * N;
    if (!accumulate) std::fill(crow, crow + N, 0.0);
    const double* arow = a + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = arow[k];
      const double* brow = b + k * N;
      for (std::size_t j = 0; j < N; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <bool Parallel>
void gemm_nt_impl(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,
                  std::span<const double> B, std::span<double> C, bool accumulate) {
  std::vector<double> bt(K * N);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
  gemm_nn_impl<Parallel>(M, N, K, A, bt, C, accumulate);
}

template <bool Parallel>
void gemm_tn_impl(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,
                  std::span<const double> B, std::span<double> C, bool accumulate) {
  const double* a = A.data();
  const double* b = B.data();
  double* c = C.data();
  const bool par = Parallel && M * N * K >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (idx m = 0; m < static_cast<idx>(M); ++m) {
    double* crow = c + m * N;
    if (!accumulate) std::fill(crow, crow + N, 0.0);
    for (std::size_t r = 0; r < K; ++r) {
      const double arm = a[r * M + m];
      const double* brow = b + r * N;
      for (std::size_t j = 0; j < N; ++j) crow[j] += arm * brow[j];
    }
  }
}

template <bool Parallel, bool Log>
void softmax_impl(std::size_t rows, std::size_t cols, std::span<const double> in, std::span<double> out) {
  const bool par = Parallel && rows * cols >= kParallelWork / 4;
#pragma omp parallel for schedule(static) if (par)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x[c]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      for (std::size_t c = 0; c < cols; ++c) y[c] = Log ? -std::numeric_limits<double>::infinity() : 0.0;
      continue;
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(x[c] - mx);
    if constexpr (Log) {
      const double lse = mx + std::log(sum);
      for (std::size_t c = 0; c < cols; ++c) y[c] = x[c] - lse;
    } else {
      for (std::size_t c = 0; c < cols; ++c) y[c] = std::exp(x[c] - mx) / sum;
    }
  }
}

template <bool Parallel>
void layer_norm_impl(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, double eps, std::span<double> out, std::span<double> mean,
                     std::span<double> rstd) {
  const bool par = Parallel && rows * cols >= kParallelWork / 4;
#pragma omp parallel for schedule(static) if (par)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = out.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (std::size_t c = 0; c < cols; ++c) yr[c] = gain[c] * (xr[c] - mu) * rs + bias[c];
  }
}

inline std::size_t key_limit(const AttentionShape& s, std::size_t kg, std::size_t i) {
  std::size_t lim = std::min(s.key_valid[kg], s.key_len);
  if (s.causal) lim = std::min(lim, i + 1);
  return lim;
}

void attention_forward_group(const AttentionShape& s, std::size_t g, std::span<const double> q,
                             std::span<const double> k, std::span<const double> v, std::span<double> out,
                             std::span<double> probs) {
  const std::size_t D = s.dim, dh = s.head_dim(), Tq = s.query_len, Tk = s.key_len;
  const std::size_t kg = s.key_group_of[g];
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> scores(Tk);
  for (std::size_t h = 0; h < s.heads; ++h) {
    for (std::size_t i = 0; i < Tq; ++i) {
      const double* qi = q.data() + (g * Tq + i) * D + h * dh;
      double* pr = probs.data() + ((g * s.heads + h) * Tq + i) * Tk;
      double* oi = out.data() + (g * Tq + i) * D + h * dh;
      std::fill(pr, pr + Tk, 0.0);
      std::fill(oi, oi + dh, 0.0);
      const std::size_t lim = key_limit(s, kg, i);
      if (lim == 0) continue;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < lim; ++j) {
        const double* kj = k.data() + (kg * Tk + j) * D + h * dh;
        double dot = 0.0;
        for (std::size_t d = 0; d < dh; ++d) dot += qi[d] * kj[d];
        scores[j] = dot * scale;
        mx = std::max(mx, scores[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < lim; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      for (std::size_t j = 0; j < lim; ++j) {
        const double p = scores[j] / sum;
        pr[j] = p;
        const double* vj = v.data() + (kg * Tk + j) * D + h * dh;
        for (std::size_t d = 0; d < dh; ++d) oi[d] += p * vj[d];
      }
    }
  }
}

void attention_backward_group(const AttentionShape& s, std::size_t g, std::span<const double> q,
                              std::span<const double> k, std::span<const double> v,
                              std::span<const double> probs, std::span<const double> dout, std::span<double> dq,
                              std::span<double> dk, std::span<double> dv) {
  const std::size_t D = s.dim, dh = s.head_dim(), Tq = s.query_len, Tk = s.key_len;
  const std::size_t kg = s.key_group_of[g];
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> dp(Tk);
  for (std::size_t h = 0; h < s.heads; ++h) {
    for (std::size_t i = 0; i < Tq; ++i) {
      const std::size_t lim = key_limit(s, kg, i);
      if (lim == 0) continue;
      const double* pr = probs.data() + ((g * s.heads + h) * Tq + i) * Tk;
      const double* doi = dout.data() + (g * Tq + i) * D + h * dh;
      const double* qi = q.data() + (g * Tq + i) * D + h * dh;
      double rowdot = 0.0;
      for (std::size_t j = 0; j < lim; ++j) {
        const double* vj = v.data() + (kg * Tk + j) * D + h * dh;
        double acc = 0.0;
        for (std::size_t d = 0; d < dh; ++d) acc += doi[d] * vj[d];
        dp[j] = acc;
        rowdot += pr[j] * acc;
      }
      for (std::size_t j = 0; j < lim; ++j) {
        const double ds = pr[j] * (dp[j] - rowdot) * scale;
        const double* kj = k.data() + (kg * Tk + j) * D + h * dh;
        if (!dq.empty()) {
          double* dqi = dq.data() + (g * Tq + i) * D + h * dh;
          for (std::size_t d = 0; d < dh; ++d) dqi[d] += ds * kj[d];
        }
        if (!dk.empty()) {
          double* dkj = dk.data() + (kg * Tk + j) * D + h * dh;
          for (std::size_t d = 0; d < dh; ++d) dkj[d] += ds * qi[d];
        }
        if (!dv.empty()) {
          double* dvj = dv.data() + (kg * Tk + j) * D + h * dh;
          for (std::size_t d = 0; d < dh; ++d) dvj[d] += pr[j] * doi[d];
        }
      }
    }
  }
}

template <bool Parallel>
void attention_forward_impl(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                            std::span<const double> v, std::span<double> out, std::span<double> probs) {
  const std::size_t G = s.query_groups();
  const bool par = Parallel && G > 1 && G * s.query_len * s.key_len * s.dim >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (idx g = 0; g < static_cast<idx>(G); ++g) attention_forward_group(s, static_cast<std::size_t>(g), q, k, v, out, probs);
}

template <bool Parallel>
void attention_backward_impl(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                             std::span<const double> v, std::span<const double> probs, std::span<const double> dout,
                             std::span<double> dq, std::span<double> dk, std::span<double> dv) {
  const std::size_t KG = s.key_groups();
  std::vector<std::vector<std::size_t>> by_key(KG);
  for (std::size_t g = 0; g < s.query_groups(); ++g) by_key[s.key_group_of[g]].push_back(g);
  const bool par = Parallel && KG > 1 && s.query_groups() * s.query_len * s.key_len * s.dim >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (idx kg = 0; kg < static_cast<idx>(KG); ++kg)
    for (auto g : by_key[static_cast<std::size_t>(kg)]) attention_backward_group(s, g, q, k, v, probs, dout, dq, dk, dv);
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

int max_threads() {
#ifdef NSLMT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

#define NSLMT_DEFINE_VARIANT(ns, PAR)                                                                          \
  namespace ns {                                                                                               \
  void gemm_nn(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,                         \
               std::span<const double> B, std::span<double> C, bool acc) {                                     \
    gemm_nn_impl<PAR>(M, N, K, A, B, C, acc);                                                                  \
  }                                                                                                            \
  void gemm_nt(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,                         \
               std::span<const double> B, std::span<double> C, bool acc) {                                     \
    gemm_nt_impl<PAR>(M, N, K, A, B, C, acc);                                                                  \
  }                                                                                                            \
  void gemm_tn(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A,                         \
               std::span<const double> B, std::span<double> C, bool acc) {                                     \
    gemm_tn_impl<PAR>(M, N, K, A, B, C, acc);                                                                  \
  }                                                                                                            \
  void softmax_rows(std::size_t r, std::size_t c, std::span<const double> in, std::span<double> out) {          \
    softmax_impl<PAR, false>(r, c, in, out);                                                                   \
  }                                                                                                            \
  void log_softmax_rows(std::size_t r, std::size_t c, std::span<const double> in, std::span<double> out) {      \
    softmax_impl<PAR, true>(r, c, in, out);                                                                    \
  }                                                                                                            \
  void layer_norm(std::size_t r, std::size_t c, std::span<const double> x, std::span<const double> g,           \
                  std::span<const double> b, double eps, std::span<double> out, std::span<double> mean,          \
                  std::span<double> rstd) {                                                                    \
    layer_norm_impl<PAR>(r, c, x, g, b, eps, out, mean, rstd);                                                 \
  }                                                                                                            \
  void attention_forward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,         \
                         std::span<const double> v, std::span<double> out, std::span<double> probs) {          \
    attention_forward_impl<PAR>(s, q, k, v, out, probs);                                                       \
  }                                                                                                            \
  void attention_backward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,        \
                          std::span<const double> v, std::span<const double> probs,                            \
                          std::span<const double> dout, std::span<double> dq, std::span<double> dk,            \
                          std::span<double> dv) {                                                              \
    attention_backward_impl<PAR>(s, q, k, v, probs, dout, dq, dk, dv);                                         \
  }                                                                                                            \
  }

NSLMT_DEFINE_VARIANT(serial, false)
NSLMT_DEFINE_VARIANT(parallel, true)
#undef NSLMT_DEFINE_VARIANT

#define NSLMT_DISPATCH(fn, ...) \
  (backend() == Backend::parallel ? parallel::fn(__VA_ARGS__) : serial::fn(__VA_ARGS__))

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A, std::span<const double> B,
             std::span<double> C, bool acc) {
  NSLMT_DISPATCH(gemm_nn, M, N, K, A, B, C, acc);
}
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A, std::span<const double> B,
             std::span<double> C, bool acc) {
  NSLMT_DISPATCH(gemm_nt, M, N, K, A, B, C, acc);
}
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, std::span<const double> A, std::span<const double> B,
             std::span<double> C, bool acc) {
  NSLMT_DISPATCH(gemm_tn, M, N, K, A, B, C, acc);
}
void softmax_rows(std::size_t r, std::size_t c, std::span<const double> in, std::span<double> out) {
  NSLMT_DISPATCH(softmax_rows, r, c, in, out);
}
void log_softmax_rows(std::size_t r, std::size_t c, std::span<const double> in, std::span<double> out) {
  NSLMT_DISPATCH(log_softmax_rows, r, c, in, out);
}
void layer_norm(std::size_t r, std::size_t c, std::span<const double> x, std::span<const double> g,
                std::span<const double> b, double eps, std::span<double> out, std::span<double> mean,
                std::span<double> rstd) {
  NSLMT_DISPATCH(layer_norm, r, c, x, g, b, eps, out, mean, rstd);
}
void attention_forward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs) {
  NSLMT_DISPATCH(attention_forward, s, q, k, v, out, probs);
}
void attention_backward(const AttentionShape& s, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs, std::span<const double> dout,
                        std::span<double> dq, std::span<double> dk, std::span<double> dv) {
  NSLMT_DISPATCH(attention_backward, s, q, k, v, probs, dout, dq, dk, dv);
}

#undef NSLMT_DISPATCH

}  // namespace nslmt::kernels
