// Compares the serial reference kernels against the OpenMP forms: wall time
// and bitwise agreement. Run with OMP_NUM_THREADS to control parallelism.
#include <chrono>
#include <cstdio>
#include <vector>

#include "sm/kernels.hpp"
#include "sm/rng.hpp"

using clk = std::chrono::steady_clock;

static double ms_since(clk::time_point t0) {
    return std::chrono::duration<double, std::milli>(clk::now() - t0).count();
}

int main() {
    sm::Rng rng(1);

    {
        const std::size_t m = 512, k = 512, n = 512;
        std::vector<float> a(m * k), b(k * n), c1(m * n), c2(m * n);
        for (auto& v : a) v = static_cast<float>(rng.normal());
        for (auto& v : b) v = static_cast<float>(rng.normal());

        auto t0 = clk::now();
        sm::kernels::gemm_serial(a.data(), b.data(), c1.data(), m, k, n, false);
        const double serial = ms_since(t0);
        t0 = clk::now();
        sm::kernels::gemm_omp(a.data(), b.data(), c2.data(), m, k, n, false);
        const double omp = ms_since(t0);
        std::printf("gemm      %zux%zux%zu  serial %8.2f ms   omp %8.2f ms   speedup %.2fx   bit-identical: %s\n", m,
                    k, n, serial, omp, serial / omp, c1 == c2 ? "yes" : "NO");
    }

    {
        const std::size_t cin = 64, tin = 4096, cout = 64, ks = 4, stride = 2;
        const std::size_t tout = (tin - ks) / stride + 1;
        std::vector<float> x(cin * tin), w(cout * cin * ks), b(cout), o1(cout * tout), o2(cout * tout);
        for (auto& v : x) v = static_cast<float>(rng.normal());
        for (auto& v : w) v = static_cast<float>(rng.normal());
        for (auto& v : b) v = static_cast<float>(rng.normal());

        auto t0 = clk::now();
        sm::kernels::conv1d_serial(x.data(), w.data(), b.data(), o1.data(), cin, tin, cout, ks, stride, tout);
        const double serial = ms_since(t0);
        t0 = clk::now();
        sm::kernels::conv1d_omp(x.data(), w.data(), b.data(), o2.data(), cin, tin, cout, ks, stride, tout);
        const double omp = ms_since(t0);
        std::printf("conv1d    %zu ch x %zu     serial %8.2f ms   omp %8.2f ms   speedup %.2fx   bit-identical: %s\n",
                    cin, tin, serial, omp, serial / omp, o1 == o2 ? "yes" : "NO");
    }
    return 0;
}
