#include <doctest.h>

#include "sm/gradcheck.hpp"
#include "sm/nn.hpp"

using namespace sm;
using namespace sm::nn;

TEST_CASE("positional encoding: t=0 row is (0,1,0,1,...)") {
    auto pe = positional_encoding<double>(0, 3, 8);
    for (std::size_t i = 0; i < 8; i += 2) {
        CHECK(pe.at(0, i) == doctest::Approx(0.0));
        CHECK(pe.at(0, i + 1) == doctest::Approx(1.0));
    }
    // position 1, dim 0 pair is (sin 1, cos 1)
    CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)));
    CHECK(pe.at(1, 1) == doctest::Approx(std::cos(1.0)));
}

TEST_CASE("self-attention pooling weights form a simplex; output in convex hull") {
    Rng rng(3);
    ParamStore<double> ps;
    SelfAttentionPool<double> pool(ps, "pool", 4, rng);
    TensorD toks({6, 4});
    for (auto& v : toks.data) v = rng.normal();
    Value<double> tv(toks);
    auto w = pool.weights(tv);
    double sum = 0;
    for (auto a : w.data) {
        CHECK(a >= 0.0);
        sum += a;
    }
    CHECK(sum == doctest::Approx(1.0));

    NoGradGuard ng;
    auto out = pool(tv);
    // output must lie inside the per-coordinate range of the tokens
    for (std::size_t c = 0; c < 4; ++c) {
        double lo = 1e30, hi = -1e30;
        for (std::size_t r = 0; r < 6; ++r) {
            lo = std::min(lo, toks.at(r, c));
            hi = std::max(hi, toks.at(r, c));
        }
        CHECK(out.val().at(0, c) >= lo - 1e-12);
        CHECK(out.val().at(0, c) <= hi + 1e-12);
    }

    // single-token clip pools to exactly that token
    Value<double> one(TensorD({1, 4}, {1., 2., 3., 4.}));
    auto o1 = pool(one);
    for (std::size_t c = 0; c < 4; ++c) CHECK(o1.val().at(0, c) == doctest::Approx(one.val().at(0, c)));
}

TEST_CASE("adaptive FFN: gate is a simplex, mixed weights are the convex mix") {
    Rng rng(4);
    ParamStore<double> ps;
    const std::size_t d = 6, hidden = 10, ds = 5, K = 3;
    AdaptiveFFN<double> affn(ps, "affn", d, hidden, ds, K, 8, rng);
    Value<double> style(TensorD({1, ds}, {0.1, -0.2, 0.3, 0.0, 0.5}));
    NoGradGuard ng;
    auto m = affn.mix(style);
    double s = 0;
    for (auto p : m.pi.val().data) {
        CHECK(p >= 0.0);
        s += p;
    }
    CHECK(s == doctest::Approx(1.0));
    // W1 equals sum_k pi_k * expert_k elementwise
    for (std::size_t i = 0; i < d * hidden; ++i) {
        double expect = 0;
        for (std::size_t k = 0; k < K; ++k) expect += m.pi.val().data[k] * affn.w1[k].val().data[i];
        CHECK(m.W1.val().data[i] == doctest::Approx(expect));
    }
}

TEST_CASE("adaptive FFN with one-hot gate reduces to that expert") {
    Rng rng(5);
    ParamStore<double> ps;
    const std::size_t d = 4, hidden = 8, ds = 3, K = 2;
    AdaptiveFFN<double> affn(ps, "affn", d, hidden, ds, K, 8, rng);
    NoGradGuard ng;
    // Force a (numerically) one-hot gate by biasing the last layer hard.
    auto& b2 = ps.at("affn.attn2.b");
    b2.mutable_val().data[0] = 200.0;
    Value<double> style(TensorD({1, ds}, {0., 0., 0.}));
    auto m = affn.mix(style);
    CHECK(m.pi.val().data[0] == doctest::Approx(1.0));
    Value<double> x(TensorD({2, d}, {0.3, -1., 2., 0.1, 1., 1., -2., 0.4}));
    auto out = affn(x, m);
    // expert 0 applied directly
    auto h = relu(add(matmul(x, affn.w1[0]), affn.b1[0]));
    auto ref = add(matmul(h, affn.w2[0]), affn.b2[0]);
    for (std::size_t i = 0; i < out.val().numel(); ++i)
        CHECK(out.val().data[i] == doctest::Approx(ref.val().data[i]).epsilon(1e-9));
}

TEST_CASE("patch discriminator: receptive field and score map lengths") {
    CHECK(PatchDisc1D<double>::kReceptiveField == 70);
    CHECK(PatchDisc1D<double>::score_len(70) == 1);
    CHECK(PatchDisc1D<double>::score_len(78) == 2);  // map stride 8
    CHECK(PatchDisc1D<double>::score_len(256) == 24);

    Rng rng(6);
    ParamStore<double> ps;
    PatchDisc1D<double> disc(ps, "d", 6, rng, {8, 8, 8, 8});
    TensorD x({6, 70});
    for (auto& v : x.data) v = rng.normal();
    NoGradGuard ng;
    auto s = disc(Value<double>(x));
    CHECK(s.val().rows() == 1);
    CHECK(s.val().cols() == 1);

    // a 70-frame input only: shorter input is rejected
    CHECK_THROWS_AS(disc(Value<double>(TensorD({6, 69}))), ShapeError);

    // changing frame 0 changes window-0 score; window separation: with 78
    // frames the second window must not see frame 0... it does overlap, so
    // instead check determinism of the map length contract.
    auto s2 = disc(Value<double>(TensorD({6, 149})));
    CHECK(s2.val().cols() == PatchDisc1D<double>::score_len(149));
}

TEST_CASE("lsgan target loss oracle") {
    Value<double> s(TensorD({1, 2}, {0.0, 2.0}));
    auto l = lsgan_target_loss(s, 1.0);  // ((0-1)^2 + (2-1)^2)/2 = 1
    CHECK(l.val().data[0] == doctest::Approx(1.0));
}

TEST_CASE("encoder layer grad-check end to end") {
    Rng rng(7);
    ParamStore<double> ps;
    const std::size_t d = 8;
    EncoderLayer<double> layer(ps, "enc", d, 2, 16, rng);
    Value<double> x(TensorD({3, d}), true);
    for (auto& v : x.mutable_val().data) v = rng.normal(0.0, 0.5);

    // Scalarize with fixed random weights: a plain mean of a layer-norm
    // output has an identically-zero input gradient, which turns the
    // finite-difference comparison into pure noise.
    TensorD r({3, d});
    for (auto& v : r.data) v = rng.normal();
    Value<double> rv(r);

    std::vector<std::pair<std::string, Value<double>>> leaves = {{"x", x}};
    leaves.emplace_back("wq", ps.at("enc.attn.q.W"));
    leaves.emplace_back("ffn_l1", ps.at("enc.ffn.l1.W"));
    leaves.emplace_back("ln1_g", ps.at("enc.ln1.g"));
    auto rep = grad_check<double>([&] { return mean_all(mul(layer(x, 1, 3), rv)); }, leaves);
    INFO(rep.failure, " max_rel_err=", rep.max_rel_err);
    CHECK(rep.pass);
}

TEST_CASE("memory-recurrent decoder matches full-context recomputation") {
    Rng rng(8);
    ParamStore<double> ps;
    const std::size_t d = 8, T = 12;
    XlDecoder<double> dec(ps, "xl", 2, d, 2, 16, 64, rng);

    std::vector<TensorD> inputs;
    for (std::size_t t = 0; t < T; ++t) {
        TensorD x({1, d});
        for (auto& v : x.data) v = rng.normal(0.0, 0.5);
        inputs.push_back(x);
    }

    NoGradGuard ng;
    auto st = dec.make_state();
    std::vector<TensorD> stepped;
    for (auto& x : inputs) stepped.push_back(dec.step(st, Value<double>(x)).val());

    // Oracle: at each step re-run attention over the full history in one
    // fused call per layer (no rolling cache involved).
    std::vector<std::vector<TensorD>> hist(dec.layers.size());
    for (std::size_t t = 0; t < T; ++t) {
        Value<double> x(inputs[t]);
        for (std::size_t li = 0; li < dec.layers.size(); ++li) {
            auto& layer = dec.layers[li];
            hist[li].push_back(x.val());
            TensorD all({hist[li].size(), d});
            for (std::size_t j = 0; j < hist[li].size(); ++j)
                std::copy(hist[li][j].data.begin(), hist[li][j].data.end(), all.data.begin() + j * d);
            Value<double> ctx(all);
            auto attn = layer.attn.wo(mha_attention(layer.attn.wq(x), layer.attn.wk(ctx), layer.attn.wv(ctx),
                                                    layer.attn.heads, 1, 1, hist[li].size()));
            auto h = layer.ln1(add(x, attn));
            x = layer.ln2(add(h, layer.ffn(h)));
        }
        for (std::size_t c = 0; c < d; ++c)
            CHECK(x.val().data[c] == doctest::Approx(stepped[t].data[c]).epsilon(1e-9));
    }
}

TEST_CASE("decoder without memory ignores history") {
    Rng rng(9);
    ParamStore<double> ps;
    XlDecoder<double> dec(ps, "sdt", 2, 8, 2, 16, 64, rng);
    dec.use_memory = false;
    TensorD x({1, 8});
    for (auto& v : x.data) v = rng.normal();
    NoGradGuard ng;
    auto st = dec.make_state();
    auto y0 = dec.step(st, Value<double>(x)).val();
    // feed different garbage, then the same input again: output identical
    TensorD g({1, 8});
    for (auto& v : g.data) v = rng.normal();
    dec.step(st, Value<double>(g));
    auto y2 = dec.step(st, Value<double>(x)).val();
    CHECK(y0.data == y2.data);
}
