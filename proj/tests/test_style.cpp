#include <doctest.h>

#include "sm/gradcheck.hpp"
#include "sm/style.hpp"

using namespace sm;
using namespace sm::style;

namespace {
ModelConfig tiny_model() {
    ModelConfig m;
    m.hidden = 16;
    m.heads = 2;
    m.enc_layers = 2;
    m.ffn_hidden = 32;
    m.style_dim = 16;
    return m;
}
}  // namespace

TEST_CASE("triplet loss oracles") {
    auto mk = [](double v, std::size_t at) {
        TensorD t({1, 8});
        t.data[at] = v;
        return Value<double>(t);
    };
    Value<double> sa(TensorD({1, 8}));
    // s_a = s_p, ||s_a - s_n|| = 10 -> 0
    CHECK(triplet_loss(sa, sa, mk(10.0, 0), 5.0).val().data[0] == doctest::Approx(0.0));
    // all equal -> gamma
    CHECK(triplet_loss(sa, sa, sa, 5.0).val().data[0] == doctest::Approx(5.0));
    // d(a,p)=3, d(a,n)=4, gamma=5 -> 4
    CHECK(triplet_loss(sa, mk(3.0, 0), mk(4.0, 1), 5.0).val().data[0] == doctest::Approx(4.0));
    // zero whenever ||a-n|| >= ||a-p|| + gamma
    CHECK(triplet_loss(sa, mk(1.0, 0), mk(6.5, 1), 5.0).val().data[0] == doctest::Approx(0.0));
}

TEST_CASE("style interpolation endpoints and midpoint") {
    TensorF s1({1, 4}, {2, 0, 0, 0}), s2({1, 4}, {0, 2, 0, 0});
    CHECK(interpolate_styles(s1, s2, 0.0).data == s1.data);
    CHECK(interpolate_styles(s1, s2, 1.0).data == s2.data);
    auto mid = interpolate_styles(s1, s2, 0.5);
    CHECK(mid.data[0] == doctest::Approx(1.0));
    CHECK(mid.data[1] == doctest::Approx(1.0));
    CHECK_THROWS(interpolate_styles(s1, s2, 1.5));
}

TEST_CASE("style encoder determinism, output width, pooled simplex") {
    Rng rng(2);
    ParamStore<float> ps;
    auto m = tiny_model();
    StyleEncoder<float> enc(ps, "es", 6, m, 8, 64, rng);
    TensorF seq({12, 6});
    for (auto& v : seq.data) v = static_cast<float>(rng.normal());
    NoGradGuard ng;
    auto c1 = enc(Value<float>(seq));
    auto c2 = enc(Value<float>(seq));
    CHECK(c1.val().shape == std::vector<std::size_t>{1, m.hidden});
    CHECK(c1.val().data == c2.val().data);
    CHECK_THROWS_AS(enc(Value<float>(TensorF({12, 5}))), ShapeError);
    CHECK(enc.length_in_range(12));
    CHECK_FALSE(enc.length_in_range(65));
}

TEST_CASE("style encoder + triplet loss pass grad_check") {
    Rng rng(3);
    ParamStore<double> ps;
    ModelConfig m = tiny_model();
    m.hidden = 8;
    m.heads = 2;
    m.enc_layers = 1;
    m.ffn_hidden = 12;
    StyleEncoder<double> enc(ps, "es", 4, m, 2, 16, rng);
    Value<double> a(TensorD({5, 4}), true), p(TensorD({4, 4}), true), n(TensorD({6, 4}), true);
    for (auto* v : {&a, &p, &n})
        for (auto& x : v->mutable_val().data) x = rng.normal(0.0, 0.5);

    std::vector<std::pair<std::string, Value<double>>> leaves = {{"a", a}, {"p", p}, {"n", n}};
    leaves.emplace_back("in.W", ps.at("es.in.W"));
    leaves.emplace_back("pool.w", ps.at("es.pool.w"));
    auto rep = grad_check<double>(
        [&] { return triplet_loss(enc(a), enc(p), enc(n), 5.0); }, leaves, 1e-4, 1e-5);
    INFO(rep.failure, " max_rel_err=", rep.max_rel_err);
    CHECK(rep.pass);
}
