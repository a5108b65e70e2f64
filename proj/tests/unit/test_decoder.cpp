// Copyright (C) 2026 camoseg contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "camoseg/model/network.hpp"

using namespace camoseg;

namespace {

struct Fixture {
    static constexpr std::size_t image = 32, d_v = 6, d = 4;
    ParamStore store;
    Decoder dec;
    explicit Fixture(std::uint64_t seed = 5) : dec(store, image, d_v, d, seed) {}

    MultiScaleFeatures feats(Rng& rng) const {
        MultiScaleFeatures f;
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t g = image / kPyramidStrides[i];
            f.feats[i] = Var(Tensor::randn({g * g, d_v}, rng), false);
        }
        return f;
    }
    std::array<Var, 4> grouped(Rng& rng) const {
        std::array<Var, 4> a;
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t g = image / kPyramidStrides[i];
            a[i] = Var(Tensor::randn({g * g, d}, rng), false);
        }
        return a;
    }
};

} // namespace

TEST_CASE("decoder output covers the full image grid") {
    Fixture f;
    Rng rng(7);
    Workspace ws;
    Var logits = f.dec.decode(ws, f.feats(rng), f.grouped(rng));
    CHECK(logits.value().shape == Shape{32, 32});
    CHECK(logits.value().all_finite());
}

TEST_CASE("all-zero decoder weights give 0.5 probability everywhere") {
    Fixture f;
    for (const auto& p : f.store.all())
        for (double& v : p->tensor.data) v = 0.0;
    Rng rng(11);
    Workspace ws;
    Var logits = f.dec.decode(ws, f.feats(rng), f.grouped(rng));
    Tensor probs = ops::sigmoid(logits).value();
    for (double v : logits.value().data) CHECK(v == 0.0);
    for (double v : probs.data) CHECK(v == 0.5);
}

TEST_CASE("exactly nine weight layers by parameter enumeration") {
    Fixture f;
    std::size_t weights = 0, biases = 0;
    for (const auto& p : f.store.all()) {
        REQUIRE(p->name.rfind("decoder.", 0) == 0);
        CHECK(p->trainable);
        if (p->name.size() >= 2 && p->name.substr(p->name.size() - 2) == ".W") ++weights;
        if (p->name.size() >= 2 && p->name.substr(p->name.size() - 2) == ".b") ++biases;
    }
    CHECK(weights == 9);
    CHECK(biases == 9);
}

TEST_CASE("decoding is one function of its inputs, with no mode-specific parameters") {
    Fixture f;
    Rng rng(13);
    MultiScaleFeatures feats = f.feats(rng);
    std::array<Var, 4> a = f.grouped(rng);
    Workspace ws, ws2;
    Tensor first = f.dec.decode(ws, feats, a).value();
    Tensor second = f.dec.decode(ws2, feats, a).value();
    CHECK(first.data == second.data); // bitwise: same inputs, same function
}

TEST_CASE("scale mismatch raises a dimension error") {
    Fixture f;
    Rng rng(17);
    MultiScaleFeatures feats = f.feats(rng);
    std::array<Var, 4> a = f.grouped(rng);
    a[1] = Var(Tensor::randn({5, Fixture::d}, rng), false);
    Workspace ws;
    CHECK_THROWS_AS(f.dec.decode(ws, feats, a), dimension_error);
}
