#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sm/io.hpp"
#include "sm/rng.hpp"

using namespace sm;

TEST_CASE("rng is deterministic and spawn streams are independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(42);
    Rng s1 = base.spawn(1), s2 = base.spawn(2);
    CHECK(s1.next_u64() != s2.next_u64());

    // spawning does not disturb the parent stream
    Rng c(42), d(42);
    (void)c.spawn(7);
    CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("rng distributions stay in range") {
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.uniform_int(10) < 10);
    }
    // normals have roughly the right scale
    double s = 0, s2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::fabs(s / n) < 0.05);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng state round-trip restores the stream") {
    Rng r(5);
    for (int i = 0; i < 17; ++i) r.next_u64();
    const std::string snap = r.state_hex();
    std::vector<std::uint64_t> expect;
    for (int i = 0; i < 10; ++i) expect.push_back(r.next_u64());
    Rng fresh(0);
    fresh.restore_hex(snap);
    for (int i = 0; i < 10; ++i) CHECK(fresh.next_u64() == expect[i]);
}

TEST_CASE("mtf round-trip preserves shape, dtype and payload") {
    auto dir = std::filesystem::temp_directory_path() / "sm_mtf_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "t.mtf";

    TensorF t({3, 4});
    Rng rng(1);
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    write_mtf(path, t);
    auto back = read_mtf<float>(path);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);

    TensorI ti({5});
    for (int i = 0; i < 5; ++i) ti[i] = i * 7 - 3;
    write_mtf(path, ti);
    auto bi = read_mtf<std::int32_t>(path);
    CHECK(bi.data == ti.data);

    // dtype mismatch is an error, not a silent cast
    CHECK_THROWS(read_mtf<float>(path));

    // corrupted magic rejected
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "NOPE1234";
    }
    CHECK_THROWS(read_mtf<float>(path));
    std::filesystem::remove_all(dir);
}
