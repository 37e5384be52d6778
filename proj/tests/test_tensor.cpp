#include <doctest.h>

#include "sm/kernels.hpp"
#include "sm/rng.hpp"
#include "sm/tensor.hpp"

using namespace sm;

TEST_CASE("tensor shape bookkeeping") {
    TensorF t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    t.at(1, 2) = 5.0f;
    CHECK(t.data[5] == 5.0f);
    CHECK_THROWS_AS(TensorF({2, 0}), ShapeError);
    CHECK_THROWS_AS(TensorF({2, 2}, {1.f, 2.f, 3.f}), ShapeError);
}

TEST_CASE("gemm oracle: [[1,2]] x [[3],[4]] = [[11]]") {
    const float a[2] = {1, 2}, b[2] = {3, 4};
    float c[1] = {-1};
    kernels::gemm(a, b, c, 1, 2, 1);
    CHECK(c[0] == doctest::Approx(11.0));
}

TEST_CASE("serial and OpenMP kernels agree bit-for-bit") {
    Rng rng(99);
    const std::size_t m = 37, k = 53, n = 29;
    std::vector<float> a(m * k), b(k * n), bt(n * k), c1(m * n), c2(m * n);
    for (auto& v : a) v = static_cast<float>(rng.normal());
    for (auto& v : b) v = static_cast<float>(rng.normal());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) bt[i * k + j] = b[j * n + i];

    kernels::gemm_serial(a.data(), b.data(), c1.data(), m, k, n, false);
    kernels::gemm_omp(a.data(), b.data(), c2.data(), m, k, n, false);
    CHECK(c1 == c2);

    kernels::gemm_bt_serial(a.data(), bt.data(), c1.data(), m, k, n, false);
    kernels::gemm_bt_omp(a.data(), bt.data(), c2.data(), m, k, n, false);
    CHECK(c1 == c2);

    std::vector<float> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
    std::vector<float> d1(m * n), d2(m * n);
    kernels::gemm_at_serial(at.data(), b.data(), d1.data(), m, k, n, false);
    kernels::gemm_at_omp(at.data(), b.data(), d2.data(), m, k, n, false);
    CHECK(d1 == d2);
    // transposed-input forms agree with the plain product (up to FP
    // contraction differences between the loop shapes)
    for (std::size_t i = 0; i < m * n; ++i) CHECK(d1[i] == doctest::Approx(c2[i]).epsilon(1e-4));
}

TEST_CASE("conv1d oracle and serial/parallel agreement") {
    // x = [1,2,3,4], w = [1,0,-1], stride 1 -> [1-3, 2-4] = [-2,-2]
    const float x[4] = {1, 2, 3, 4};
    const float w[3] = {1, 0, -1};
    const float b[1] = {0};
    float out[2];
    kernels::conv1d(x, w, b, out, 1, 4, 1, 3, 1, 2);
    CHECK(out[0] == doctest::Approx(-2.0));
    CHECK(out[1] == doctest::Approx(-2.0));

    Rng rng(7);
    const std::size_t cin = 5, tin = 91, cout = 7, ks = 4, stride = 2, tout = (tin - ks) / stride + 1;
    std::vector<float> xv(cin * tin), wv(cout * cin * ks), bv(cout), o1(cout * tout), o2(cout * tout);
    for (auto& v : xv) v = static_cast<float>(rng.normal());
    for (auto& v : wv) v = static_cast<float>(rng.normal());
    for (auto& v : bv) v = static_cast<float>(rng.normal());
    kernels::conv1d_serial(xv.data(), wv.data(), bv.data(), o1.data(), cin, tin, cout, ks, stride, tout);
    kernels::conv1d_omp(xv.data(), wv.data(), bv.data(), o2.data(), cin, tin, cout, ks, stride, tout);
    CHECK(o1 == o2);
}
