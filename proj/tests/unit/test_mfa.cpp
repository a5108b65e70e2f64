// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "camoseg/model/losses.hpp"
#include "camoseg/model/mfa.hpp"
#include "oracles.hpp"

using namespace camoseg;

namespace {

struct Fixture {
    ParamStore store;
    Mfa mfa;
    Fixture(std::size_t L_t = 4, std::size_t d_t = 6, std::size_t d = 4, std::size_t d_v = 8,
            std::uint64_t seed = 7)
        : mfa(store, make_cfg(L_t, d_t, d), d_v, seed) {}
    static MfaConfig make_cfg(std::size_t L_t, std::size_t d_t, std::size_t d) {
        MfaConfig c;
        c.L_t = L_t;
        c.d_t = d_t;
        c.d = d;
        return c;
    }
};

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

} // namespace

TEST_CASE("config validation") {
    MfaConfig c;
    c.L_t = 5;
    CHECK_THROWS_AS(c.validate(), config_error);
    c.L_t = 0;
    CHECK_THROWS_AS(c.validate(), config_error);
}

TEST_CASE("projector zero input with zero biases maps to zero") {
    Fixture f;
    Workspace ws;
    Tensor out = f.mfa.project(ws, Var(Tensor::zeros({5, 8}), false)).value();
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("projector is shared across scales and matches the composition oracle") {
    Fixture f;
    // one parameter set regardless of how many scales use it
    std::size_t projector_params = 0;
    for (const auto& p : f.store.all())
        if (p->name.rfind("mfa.projector.", 0) == 0) ++projector_params;
    CHECK(projector_params == 4);
    CHECK(f.mfa.projector_W1() == f.store.find("mfa.projector.W1"));

    Rng rng(11);
    Tensor x = Tensor::randn({6, 8}, rng);
    Workspace ws;
    Tensor got = f.mfa.project(ws, Var(x, false)).value();

    auto P = [&](const char* n) { return f.store.find(std::string("mfa.projector.") + n)->tensor; };
    Tensor h = oracle::matmul(x, P("W1"));
    for (std::size_t i = 0; i < h.shape[0]; ++i)
        for (std::size_t j = 0; j < h.shape[1]; ++j) {
            double v = h.at(i, j) + P("b1").data[j];
            h.at(i, j) = v * 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
        }
    Tensor expect = oracle::matmul(h, P("W2"));
    for (std::size_t i = 0; i < expect.shape[0]; ++i)
        for (std::size_t j = 0; j < expect.shape[1]; ++j) expect.at(i, j) += P("b2").data[j];
    CHECK(max_abs_diff(got, expect) <= 1e-12);
}

TEST_CASE("mixer halves the token axis and widens the channels") {
    Fixture f(16, 48, 64, 8, 3);
    Rng rng(13);
    Workspace ws;
    Tensor out = f.mfa.mix(ws, Var(Tensor::randn({16, 48}, rng), false)).value();
    CHECK(out.shape == Shape{8, 64});

    Workspace ws2;
    CHECK_THROWS_AS(f.mfa.mix(ws2, Var(Tensor::randn({15, 48}, rng), false)), config_error);
}

TEST_CASE("all-zero mixer weights map zero input to zero output") {
    Fixture f;
    for (const auto& p : f.store.all())
        if (p->name.rfind("mfa.mixer.", 0) == 0)
            for (double& v : p->tensor.data) v = 0.0;
    Workspace ws;
    Tensor out = f.mfa.mix(ws, Var(Tensor::zeros({4, 6}), false)).value();
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("caption and query share the mixer: equal inputs give equal outputs") {
    Fixture f;
    const Tensor& q0 = f.mfa.query_param().tensor;
    Workspace ws;
    Tensor mixed_caption = f.mfa.mix(ws, Var(q0, false)).value();
    Workspace ws2;
    Tensor mixed_query = f.mfa.mixed_query(ws2).value();
    CHECK(mixed_caption.data == mixed_query.data); // bitwise
}

TEST_CASE("token match reproduces the hand-computed example") {
    Tensor v({2, 2}, {1, 0, 0, 1});
    Tensor u({2, 2}, {1, 0, 0, 1});
    Tensor a = Mfa::token_match(Var(v, false), Var(u, false)).value();
    CHECK(a.at(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(a.at(0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(a.at(1, 0) == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(a.at(1, 1) == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("constant similarity rows collapse to the uniform mean of text tokens") {
    // v row orthogonal to every u row: similarities are constant zero
    Tensor v({1, 3}, {0, 0, 1});
    Tensor u({2, 3}, {1, 0, 0, 0, 1, 0});
    Tensor a = Mfa::token_match(Var(v, false), Var(u, false)).value();
    CHECK(a.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(a.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(a.at(0, 2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("token match rows are convex combinations of text token rows") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t lv = 1 + rng.below(8), lu = 2 + rng.below(5), d = 1 + rng.below(5);
        Tensor v = Tensor::randn({lv, d}, rng);
        Tensor u = Tensor::randn({lu, d}, rng);
        Tensor a = Mfa::token_match(Var(v, false), Var(u, false)).value();
        for (std::size_t i = 0; i < lv; ++i)
            for (std::size_t p = 0; p < d; ++p) {
                double lo = u.at(0, p), hi = u.at(0, p);
                for (std::size_t j = 1; j < lu; ++j) {
                    lo = std::min(lo, u.at(j, p));
                    hi = std::max(hi, u.at(j, p));
                }
                CHECK(a.at(i, p) >= lo - 1e-12);
                CHECK(a.at(i, p) <= hi + 1e-12);
            }
    }
}

TEST_CASE("token match equals the naive oracle on random instances") {
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t lv = 1 + rng.below(8), lu = 1 + rng.below(6), d = 1 + rng.below(5);
        Tensor v = Tensor::randn({lv, d}, rng);
        Tensor u = Tensor::randn({lu, d}, rng);
        // degenerate constant-similarity rows included via occasional zero rows
        if (trial % 7 == 0)
            for (std::size_t p = 0; p < d; ++p) v.at(0, p) = 0.0;
        Tensor got = Mfa::token_match(Var(v, false), Var(u, false)).value();
        Tensor expect = oracle::token_match(v, u);
        CHECK(max_abs_diff(got, expect) <= 1e-12);
    }
}

TEST_CASE("the sparsification threshold is 1/L_v at every scale") {
    Rng rng(23);
    for (std::size_t lv : {4ul, 256ul}) {
        Tensor v = Tensor::randn({lv, 4}, rng);
        Tensor u = Tensor::randn({6, 4}, rng);
        Tensor got = Mfa::token_match(Var(v, false), Var(u, false)).value();

        auto manual = [&](double tau) {
            Var s = ops::minmax_rows(ops::matmul(Var(v, false), ops::transpose(Var(u, false))));
            Var sp = ops::threshold_keep(s, tau);
            return ops::matmul(ops::softmax_rows(sp), Var(u, false)).value();
        };
        CHECK(max_abs_diff(got, manual(1.0 / static_cast<double>(lv))) == 0.0);
        if (lv == 256) {
            // a wrong threshold changes the result
            CHECK(max_abs_diff(got, manual(1.0 / 8.0)) > 1e-6);
        }

        // retained entries >= tau, dropped entries were < tau
        Var s = ops::minmax_rows(ops::matmul(Var(v, false), ops::transpose(Var(u, false))));
        Tensor sp = ops::threshold_keep(s, 1.0 / static_cast<double>(lv)).value();
        for (std::size_t i = 0; i < sp.data.size(); ++i) {
            if (sp.data[i] != 0.0) CHECK(sp.data[i] >= 1.0 / static_cast<double>(lv));
            else CHECK(s.value().data[i] < 1.0 / static_cast<double>(lv));
        }
    }
}

TEST_CASE("align_all: caption equal to the query value gives identical grouped tokens") {
    Fixture f(4, 6, 4, 8, 29);
    Rng rng(31);
    MultiScaleFeatures feats;
    std::size_t counts[4] = {64, 16, 4, 1};
    for (std::size_t i = 0; i < 4; ++i)
        feats.feats[i] = Var(Tensor::randn({counts[i], 8}, rng), false);

    Tensor caption = f.mfa.query_param().tensor;
    Workspace ws;
    AlignResult r = f.mfa.align_all(ws, feats, &caption, true);
    REQUIRE(r.caption.has_value());
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(r.caption->scales[i].value().data == r.query.scales[i].value().data);

    // the query loss of identical grouped sets is zero
    Var q = losses::query_loss(r.caption->scales, r.query.scales);
    CHECK(q.value().item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("align_all shape contract and mode errors") {
    Fixture f(4, 6, 4, 8, 37);
    Rng rng(41);
    MultiScaleFeatures feats;
    std::size_t counts[4] = {256, 64, 16, 4}; // image size 64
    for (std::size_t i = 0; i < 4; ++i)
        feats.feats[i] = Var(Tensor::randn({counts[i], 8}, rng), false);

    Workspace ws;
    CHECK_THROWS_AS(f.mfa.align_all(ws, feats, nullptr, /*training_mode=*/true), config_error);

    AlignResult r = f.mfa.align_all(ws, feats, nullptr, false);
    CHECK_FALSE(r.caption.has_value());
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(r.query.scales[i].value().shape == Shape{counts[i], 4});
    }

    Tensor bad({3, 6});
    CHECK_THROWS_AS(f.mfa.align_all(ws, feats, &bad, true), config_error);
}
