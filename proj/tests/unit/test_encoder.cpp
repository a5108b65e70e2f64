// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "camoseg/model/encoder.hpp"
#include "camoseg/model/network.hpp"
#include "oracles.hpp"

using namespace camoseg;

namespace {

EncoderConfig tiny_cfg() {
    EncoderConfig c;
    c.image_size = 32;
    c.patch_size = 8;
    c.depth = 2;
    c.d_v = 8;
    c.heads = 2;
    c.d_lr = 4;
    c.mlp_ratio = 2;
    return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

void zero_params_with_prefix(ParamStore& store, const std::string& prefix) {
    for (const auto& p : store.all())
        if (p->name.rfind(prefix, 0) == 0)
            for (double& v : p->tensor.data) v = 0.0;
}

// step-by-step reference for one pre-LN transformer block
Tensor naive_block(const Tensor& E, const ParamStore& s, const EncoderConfig& cfg,
                   const std::string& base) {
    auto P = [&](const std::string& n) { return s.find(base + n)->tensor; };
    Tensor x1 = oracle::layer_norm(E, P("ln1.gamma"), P("ln1.beta"));
    auto lin = [&](const Tensor& x, const Tensor& W, const Tensor& b) {
        Tensor y = oracle::matmul(x, W);
        for (std::size_t i = 0; i < y.shape[0]; ++i)
            for (std::size_t j = 0; j < y.shape[1]; ++j) y.at(i, j) += b.data[j];
        return y;
    };
    Tensor q = lin(x1, P("attn.Wq"), P("attn.bq"));
    Tensor k = lin(x1, P("attn.Wk"), P("attn.bk"));
    Tensor v = lin(x1, P("attn.Wv"), P("attn.bv"));
    std::size_t L = E.shape[0], hd = cfg.head_dim();
    Tensor ctx({L, cfg.d_v});
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        Tensor scores({L, L});
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < L; ++j) {
                double acc = 0;
                for (std::size_t p = 0; p < hd; ++p)
                    acc += q.at(i, h * hd + p) * k.at(j, h * hd + p);
                scores.at(i, j) = acc / std::sqrt(static_cast<double>(hd));
            }
        Tensor att = oracle::softmax_rows(scores);
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t p = 0; p < hd; ++p) {
                double acc = 0;
                for (std::size_t j = 0; j < L; ++j) acc += att.at(i, j) * v.at(j, h * hd + p);
                ctx.at(i, h * hd + p) = acc;
            }
    }
    Tensor attn_out = lin(ctx, P("attn.Wo"), P("attn.bo"));
    Tensor e_hat = E;
    for (std::size_t i = 0; i < e_hat.data.size(); ++i) e_hat.data[i] += attn_out.data[i];

    Tensor x2 = oracle::layer_norm(e_hat, P("ln2.gamma"), P("ln2.beta"));
    Tensor h1 = lin(x2, P("ffn.W1"), P("ffn.b1"));
    for (double& vv : h1.data) vv = vv > 0 ? vv : 0;
    Tensor h2 = lin(h1, P("ffn.W2"), P("ffn.b2"));
    Tensor out = e_hat;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += h2.data[i];
    return out;
}

} // namespace

TEST_CASE("config validation") {
    EncoderConfig c = tiny_cfg();
    c.patch_size = 7;
    CHECK_THROWS_AS(c.validate(), config_error);
    c = tiny_cfg();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), config_error);
    c = tiny_cfg();
    c.d_lr = 8;
    CHECK_THROWS_AS(c.validate(), config_error);
    c = tiny_cfg();
    c.image_size = 40; // not divisible by 32
    CHECK_THROWS_AS(c.validate(), config_error);
}

TEST_CASE("patch_embed shape and positional term") {
    EncoderConfig c;
    c.image_size = 64;
    c.patch_size = 8;
    c.d_v = 16;
    c.heads = 2;
    c.d_lr = 4;
    ParamStore store;
    Encoder enc(store, c, 3);
    Workspace ws;
    Tensor img({64, 64, 3});
    Var tokens = enc.patch_embed(ws, img);
    CHECK(tokens.value().shape == Shape{64, 16});

    // zero image, zero bias -> positions only
    const Tensor& pos = store.find("encoder.patch.pos")->tensor;
    CHECK(max_abs_diff(tokens.value(), pos) == 0.0);

    CHECK_THROWS_AS(enc.patch_embed(ws, Tensor({32, 32, 3})), config_error);
}

TEST_CASE("single-patch image equals the direct linear map of the flattened patch") {
    EncoderConfig c;
    c.image_size = 32;
    c.patch_size = 32;
    c.d_v = 6;
    c.heads = 2;
    c.d_lr = 2;
    ParamStore store;
    Encoder enc(store, c, 5);
    Rng rng(17);
    Tensor img = Tensor::randn({32, 32, 3}, rng);
    Workspace ws;
    Tensor got = enc.patch_embed(ws, img).value();

    const Tensor& W = store.find("encoder.patch.W")->tensor;
    const Tensor& b = store.find("encoder.patch.b")->tensor;
    const Tensor& pos = store.find("encoder.patch.pos")->tensor;
    Tensor flat({1, 32 * 32 * 3});
    std::size_t o = 0;
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) flat.data[o++] = img.at(y, x, ch);
    Tensor expect = oracle::matmul(flat, W);
    for (std::size_t j = 0; j < 6; ++j) expect.data[j] += b.data[j] + pos.data[j];
    CHECK(max_abs_diff(got, expect) <= 1e-12);
}

TEST_CASE("block with all-zero weights is the identity") {
    ParamStore store;
    Encoder enc(store, tiny_cfg(), 7);
    zero_params_with_prefix(store, "encoder.block0.");
    Rng rng(19);
    Tensor E = Tensor::randn({16, 8}, rng);
    Workspace ws;
    Tensor out = enc.block_forward(ws, Var(E, false), enc.blocks()[0]).value();
    CHECK(max_abs_diff(out, E) == 0.0);
}

TEST_CASE("single-token attention weight is exactly one") {
    EncoderConfig c;
    c.image_size = 32;
    c.patch_size = 32;
    c.d_v = 6;
    c.heads = 2;
    c.d_lr = 2;
    ParamStore store;
    Encoder enc(store, c, 11);
    Rng rng(23);
    Tensor x = Tensor::randn({1, 6}, rng);
    Workspace ws;
    Tensor got = enc.attention(ws, Var(x, false), enc.blocks()[0].attn).value();
    // with one token, context == value projection regardless of q and k
    auto P = [&](const char* n) { return store.find(std::string("encoder.block0.attn.") + n)->tensor; };
    Tensor v = oracle::matmul(x, P("Wv"));
    for (std::size_t j = 0; j < 6; ++j) v.data[j] += P("bv").data[j];
    Tensor expect = oracle::matmul(v, P("Wo"));
    for (std::size_t j = 0; j < 6; ++j) expect.data[j] += P("bo").data[j];
    CHECK(max_abs_diff(got, expect) <= 1e-12);
}

TEST_CASE("random tiny block matches the step-by-step oracle") {
    ParamStore store;
    EncoderConfig c = tiny_cfg();
    Encoder enc(store, c, 13);
    // give the frozen weights some bite so the comparison is not trivial
    for (const auto& p : store.all())
        if (p->name.rfind("encoder.block0.", 0) == 0)
            for (double& v : p->tensor.data) v *= 20.0;
    Rng rng(29);
    Tensor E = Tensor::randn({16, 8}, rng);
    Workspace ws;
    Tensor got = enc.block_forward(ws, Var(E, false), enc.blocks()[0]).value();
    Tensor expect = naive_block(E, store, c, "encoder.block0.");
    CHECK(max_abs_diff(got, expect) <= 1e-10);
}

TEST_CASE("adapter analytic cases and the composition oracle") {
    ParamStore store;
    Encoder enc(store, tiny_cfg(), 31);
    const AdapterParams& a = enc.adapters()[0];
    Rng rng(37);
    for (double& v : store.find("encoder.adapter0.b2")->tensor.data) v = rng.normal();

    Workspace ws;
    Tensor z0 = Tensor::zeros({5, 8});
    Tensor out = enc.adapter_forward(ws, Var(z0, false), a).value();
    const Tensor& b2 = store.find("encoder.adapter0.b2")->tensor;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j) CHECK(out.at(i, j) == b2.data[j]);

    // W_up = 0 gives constant b2 rows for any input
    Tensor z = Tensor::randn({5, 8}, rng);
    for (double& v : store.find("encoder.adapter0.Wup")->tensor.data) v = 0.0;
    Workspace ws2;
    Tensor out2 = enc.adapter_forward(ws2, Var(z, false), a).value();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j) CHECK(out2.at(i, j) == b2.data[j]);

    // random case against relu(z Wd + b1) Wu + b2 with plain loops
    for (double& v : store.find("encoder.adapter0.Wup")->tensor.data) v = rng.normal();
    auto P = [&](const char* n) { return store.find(std::string("encoder.adapter0.") + n)->tensor; };
    Tensor h = oracle::matmul(z, P("Wdown"));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            h.at(i, j) += P("b1").data[j];
            if (h.at(i, j) < 0) h.at(i, j) = 0;
        }
    Tensor expect = oracle::matmul(h, P("Wup"));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j) expect.at(i, j) += P("b2").data[j];
    Workspace ws3;
    CHECK(max_abs_diff(enc.adapter_forward(ws3, Var(z, false), a).value(), expect) <= 1e-12);
}

TEST_CASE("adapted block reduces to the vanilla block at scale zero") {
    ParamStore store;
    Encoder enc(store, tiny_cfg(), 41);
    Rng rng(43);
    Tensor E = Tensor::randn({16, 8}, rng);
    Workspace ws;
    Tensor plain = enc.block_forward(ws, Var(E, false), enc.blocks()[0]).value();
    Workspace ws2;
    Tensor adapted =
        enc.adapted_block_forward(ws2, Var(E, false), enc.blocks()[0], enc.adapters()[0]).value();
    CHECK(max_abs_diff(plain, adapted) <= 1e-9);
}

TEST_CASE("adapted block with unit scale and dead FFN is residual plus adapter") {
    ParamStore store;
    Encoder enc(store, tiny_cfg(), 47);
    store.find("encoder.adapter0.scale")->tensor.data[0] = 1.0;
    zero_params_with_prefix(store, "encoder.block0.ffn");
    zero_params_with_prefix(store, "encoder.block0.ln2");
    Rng rng(53);
    Tensor E = Tensor::randn({16, 8}, rng);

    Workspace ws;
    Var Ev(E, false);
    Var attn_in = ops::layer_norm(Ev, ws.use(*store.find("encoder.block0.ln1.gamma")),
                                  ws.use(*store.find("encoder.block0.ln1.beta")));
    Var e_hat = ops::add(enc.attention(ws, attn_in, enc.blocks()[0].attn), Ev);
    Var expect = ops::add(enc.adapter_forward(ws, e_hat, enc.adapters()[0]), e_hat);

    Workspace ws2;
    Tensor got =
        enc.adapted_block_forward(ws2, Var(E, false), enc.blocks()[0], enc.adapters()[0]).value();
    CHECK(max_abs_diff(got, expect.value()) <= 1e-12);
}

TEST_CASE("gradient of the adapter scale is the inner product with the adapter output") {
    ParamStore store;
    Encoder enc(store, tiny_cfg(), 59);
    Parameter* scale = store.find("encoder.adapter0.scale");
    scale->tensor.data[0] = 0.3;
    Rng rng(61);
    Tensor E = Tensor::randn({16, 8}, rng);

    Workspace ws;
    Var scale_leaf = ws.use(*scale);
    Var out = enc.adapted_block_forward(ws, Var(E, false), enc.blocks()[0], enc.adapters()[0]);
    Var loss = ops::sum(out);
    backward(loss);
    REQUIRE(scale_leaf.has_grad());
    double analytic = scale_leaf.grad().data[0];

    // upstream is all ones, so the gradient is sum(Adapter(E_hat))
    Workspace ws2;
    Var attn_in = ops::layer_norm(Var(E, false), ws2.use(*store.find("encoder.block0.ln1.gamma")),
                                  ws2.use(*store.find("encoder.block0.ln1.beta")));
    Var e_hat = ops::add(enc.attention(ws2, attn_in, enc.blocks()[0].attn), Var(E, false));
    double expected = ops::sum(enc.adapter_forward(ws2, e_hat, enc.adapters()[0])).value().item();
    CHECK(analytic == doctest::Approx(expected).epsilon(1e-10));

    // and finite differences agree
    double h = 1e-6;
    auto eval = [&](double s) {
        scale->tensor.data[0] = s;
        Workspace w;
        return ops::sum(enc.adapted_block_forward(w, Var(E, false), enc.blocks()[0],
                                                  enc.adapters()[0]))
            .value()
            .item();
    };
    double num = (eval(0.3 + h) - eval(0.3 - h)) / (2 * h);
    scale->tensor.data[0] = 0.3;
    CHECK(analytic == doctest::Approx(num).epsilon(1e-4));
}

TEST_CASE("encode with depth zero is patch embedding; encoding is deterministic") {
    EncoderConfig c = tiny_cfg();
    c.depth = 0;
    ParamStore store;
    Encoder enc(store, c, 67);
    Rng rng(71);
    Tensor img({32, 32, 3});
    for (double& v : img.data) v = rng.uniform();
    Workspace ws, ws2;
    CHECK(max_abs_diff(enc.encode(ws, img).value(), enc.patch_embed(ws2, img).value()) == 0.0);

    ParamStore store2;
    Encoder enc2(store2, tiny_cfg(), 73);
    Workspace wa, wb;
    Tensor a = enc2.encode(wa, img).value();
    Tensor b = enc2.encode(wb, img).value();
    CHECK(a.data == b.data); // bitwise
}

TEST_CASE("identity reduction: zero adapter scales reproduce the vanilla encoder") {
    ParamStore store;
    Encoder enc(store, tiny_cfg(), 79);
    Rng rng(83);
    for (int i = 0; i < 5; ++i) {
        Tensor img({32, 32, 3});
        for (double& v : img.data) v = rng.uniform();
        Workspace ws, ws2;
        double d = max_abs_diff(enc.encode(ws, img, true).value(),
                                enc.encode(ws2, img, false).value());
        CHECK(d <= 1e-9);
    }
}

TEST_CASE("pyramid token counts follow HW/n^2") {
    EncoderConfig c;
    c.image_size = 64;
    c.patch_size = 8;
    c.depth = 1;
    c.d_v = 8;
    c.heads = 2;
    c.d_lr = 2;
    ParamStore store;
    Encoder enc(store, c, 89);
    Rng rng(97);
    Workspace ws;
    Var tokens(Tensor::randn({64, 8}, rng), false);
    MultiScaleFeatures f = enc.sfp(ws, tokens);
    CHECK(f.feats[0].value().shape == Shape{256, 8});
    CHECK(f.feats[1].value().shape == Shape{64, 8});
    CHECK(f.feats[2].value().shape == Shape{16, 8});
    CHECK(f.feats[3].value().shape == Shape{4, 8});
}

TEST_CASE("sfp with identity channel maps preserves constants and the native scale") {
    EncoderConfig c;
    c.image_size = 64;
    c.patch_size = 16; // native grid is the stride-16 scale
    c.depth = 1;
    c.d_v = 4;
    c.heads = 2;
    c.d_lr = 2;
    ParamStore store;
    Encoder enc(store, c, 101);
    for (std::size_t s : kPyramidStrides) {
        Parameter* W = store.find("encoder.sfp" + std::to_string(s) + ".W");
        W->tensor = Tensor::identity(4);
    }
    Workspace ws;
    Var constant(Tensor::full({16, 4}, 0.7), false);
    MultiScaleFeatures f = enc.sfp(ws, constant);
    for (std::size_t i = 0; i < 4; ++i)
        for (double v : f.feats[i].value().data) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

    Rng rng(103);
    Tensor toks = Tensor::randn({16, 4}, rng);
    Workspace ws2;
    MultiScaleFeatures g = enc.sfp(ws2, Var(toks, false));
    CHECK(max_abs_diff(g.feats[MultiScaleFeatures::index_of(16)].value(), toks) == 0.0);

    Workspace ws3;
    CHECK_THROWS_AS(enc.sfp(ws3, Var(Tensor::randn({15, 4}, rng), false)), config_error);
}

TEST_CASE("adapter parameter count and backbone fraction") {
    EncoderConfig c;
    c.image_size = 64;
    c.patch_size = 8;
    c.depth = 4;
    c.d_v = 96;
    c.heads = 4;
    c.d_lr = 16;
    c.mlp_ratio = 4;
    ParamStore store;
    Encoder enc(store, c, 107);
    std::size_t adapter_count = 0, backbone_count = 0;
    for (const auto& p : store.all()) {
        if (p->name.rfind("encoder.adapter", 0) == 0) {
            adapter_count += p->tensor.numel();
            CHECK(p->trainable);
        } else if (p->name.rfind("encoder.block", 0) == 0 || p->name.rfind("encoder.patch", 0) == 0) {
            backbone_count += p->tensor.numel();
            CHECK_FALSE(p->trainable);
        }
    }
    std::size_t expect = c.depth * (2 * c.d_v * c.d_lr + c.d_lr + c.d_v + 1);
    CHECK(adapter_count == expect);
    CHECK(adapter_count * 10 < backbone_count); // a small fraction of the backbone
}
