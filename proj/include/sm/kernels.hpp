#pragma once

#include <cstddef>

// Inner-loop kernels behind the tensor ops. Each kernel has a serial
// reference form and an OpenMP form; the dispatcher picks by problem size.
// Parallel forms assign each output element to exactly one thread so both
// forms produce bit-identical results regardless of thread count.

namespace sm::kernels {

inline constexpr std::size_t kParallelFlopThreshold = 1u << 18;

// C[m x n] += / = A[m x k] * B[k x n]
template <typename T>
void gemm_serial(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = T{};
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = a[i * k + p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

template <typename T>
void gemm_omp(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = T{};
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = a[i * k + p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate = false) {
    if (m * k * n >= kParallelFlopThreshold && m > 1)
        gemm_omp(a, b, c, m, k, n, accumulate);
    else
        gemm_serial(a, b, c, m, k, n, accumulate);
}

// C[m x n] += / = A[k x m]^T * B[k x n]
template <typename T>
void gemm_at_serial(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = T{};
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = a[p * m + i];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

template <typename T>
void gemm_at_omp(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = T{};
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = a[p * m + i];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

template <typename T>
void gemm_at(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate = false) {
    if (m * k * n >= kParallelFlopThreshold && m > 1)
        gemm_at_omp(a, b, c, m, k, n, accumulate);
    else
        gemm_at_serial(a, b, c, m, k, n, accumulate);
}

// C[m x n] += / = A[m x k] * B[n x k]^T
template <typename T>
void gemm_bt_serial(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc{};
            const T* arow = a + i * k;
            const T* brow = b + j * k;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate)
                c[i * n + j] += acc;
            else
                c[i * n + j] = acc;
        }
    }
}

template <typename T>
void gemm_bt_omp(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc{};
            const T* arow = a + i * k;
            const T* brow = b + j * k;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate)
                c[i * n + j] += acc;
            else
                c[i * n + j] = acc;
        }
    }
}

template <typename T>
void gemm_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate = false) {
    if (m * k * n >= kParallelFlopThreshold && m > 1)
        gemm_bt_omp(a, b, c, m, k, n, accumulate);
    else
        gemm_bt_serial(a, b, c, m, k, n, accumulate);
}

// out[cout][t] = sum_cin sum_j w[cout][cin][j] * x[cin][t*stride + j] + b[cout]
template <typename T>
void conv1d_serial(const T* x, const T* w, const T* b, T* out, std::size_t cin, std::size_t tin, std::size_t cout,
                   std::size_t ksize, std::size_t stride, std::size_t tout) {
    for (std::size_t oc = 0; oc < cout; ++oc) {
        for (std::size_t t = 0; t < tout; ++t) {
            T acc = b ? b[oc] : T{};
            for (std::size_t ic = 0; ic < cin; ++ic) {
                const T* xr = x + ic * tin + t * stride;
                const T* wr = w + (oc * cin + ic) * ksize;
                for (std::size_t j = 0; j < ksize; ++j) acc += wr[j] * xr[j];
            }
            out[oc * tout + t] = acc;
        }
    }
}

template <typename T>
void conv1d_omp(const T* x, const T* w, const T* b, T* out, std::size_t cin, std::size_t tin, std::size_t cout,
                std::size_t ksize, std::size_t stride, std::size_t tout) {
#pragma omp parallel for schedule(static)
    for (std::size_t oc = 0; oc < cout; ++oc) {
        for (std::size_t t = 0; t < tout; ++t) {
            T acc = b ? b[oc] : T{};
            for (std::size_t ic = 0; ic < cin; ++ic) {
                const T* xr = x + ic * tin + t * stride;
                const T* wr = w + (oc * cin + ic) * ksize;
                for (std::size_t j = 0; j < ksize; ++j) acc += wr[j] * xr[j];
            }
            out[oc * tout + t] = acc;
        }
    }
}

template <typename T>
void conv1d(const T* x, const T* w, const T* b, T* out, std::size_t cin, std::size_t tin, std::size_t cout,
            std::size_t ksize, std::size_t stride, std::size_t tout) {
    if (cout * tout * cin * ksize >= kParallelFlopThreshold && cout > 1)
        conv1d_omp(x, w, b, out, cin, tin, cout, ksize, stride, tout);
    else
        conv1d_serial(x, w, b, out, cin, tin, cout, ksize, stride, tout);
}

}  // namespace sm::kernels
