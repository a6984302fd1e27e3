#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "shapenet/cdbn.hpp"
#include "shapenet/checkpoint.hpp"
#include "shapenet/rng.hpp"

using namespace shapenet;

namespace {

int between(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.index(static_cast<std::uint64_t>(hi - lo + 1))); }

ConvLayerParams random_conv(Rng& rng, int channels) {
    for (;;) {
        const int n = between(rng, 2, 8);
        const int k = between(rng, 1, std::min(n, 4));
        const int s = between(rng, 1, 2);
        if ((n - k) % s) continue;
        ConvLayerParams p(between(rng, 1, 3), channels, k, s, n);
        for (auto* t : {&p.filters, &p.hidden_bias, &p.visible_bias})
            for (auto& x : *t) x = static_cast<float>(rng.normal(0, 0.5));
        return p;
    }
}

std::vector<double> random_bits(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return v;
}

DenseLayerParams random_dense(Rng& rng, int h, int v, double scale = 1.0) {
    DenseLayerParams p(h, v);
    for (auto* t : {&p.weights, &p.hidden_bias, &p.visible_bias})
        for (auto& x : *t) x = static_cast<float>(rng.normal(0, scale));
    return p;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

} // namespace

TEST_CASE("conv energy matches the nested-loop oracle") {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        const auto p = random_conv(rng, 2);
        const LayerState v{random_bits(rng, p.visible_size()), true}, h{random_bits(rng, p.hidden_size()), true};
        CHECK(rel_err(conv_energy(p, v, h), oracle::conv_energy(p, v.values, h.values)) < 1e-6);
    }
}

TEST_CASE("conv net inputs are energy differences") {
    // Flipping one hidden unit on lowers the energy by exactly its net input;
    // likewise for one visible unit.
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const auto p = random_conv(rng, 2);
        const auto v = random_bits(rng, p.visible_size());
        auto h = random_bits(rng, p.hidden_size());
        const auto hin = conv_hidden_input(p, v);
        const std::vector<double> zeros(p.hidden_size(), 0.0);
        for (std::size_t j = 0; j < p.hidden_size(); ++j) {
            auto on = zeros;
            on[j] = 1;
            CHECK(hin[j] == doctest::Approx(oracle::conv_energy(p, v, zeros) - oracle::conv_energy(p, v, on)).epsilon(1e-9));
        }
        const auto vin = conv_visible_input(p, h);
        for (std::size_t l = 0; l < p.visible_size(); l += 3) {
            auto off = v, on = v;
            off[l] = 0;
            on[l] = 1;
            CHECK(vin[l] == doctest::Approx(oracle::conv_energy(p, off, h) - oracle::conv_energy(p, on, h)).epsilon(1e-9));
        }
    }
}

TEST_CASE("dense conditionals equal enumeration") {
    Rng rng(11), unused(0);
    for (int t = 0; t < 50; ++t) {
        const auto p = random_dense(rng, 1 + t % 3, 2 + t % 2, 2.0);
        for (unsigned code = 0; code < (1u << p.visible); ++code) {
            const LayerState v{oracle::bits(code, p.visible), true};
            const auto up = propagate_up(p, v, Propagation::Mean, unused);
            const auto ref = oracle::hidden_marginals(p, v.values);
            for (int j = 0; j < p.hidden; ++j) CHECK(std::abs(up.values[j] - ref[j]) < 1e-9);
            CHECK(dense_energy(p, v, up) == doctest::Approx(oracle::dense_energy(p, v.values, up.values)).epsilon(1e-12));
        }
        for (unsigned code = 0; code < (1u << p.hidden); ++code) {
            const LayerState h{oracle::bits(code, p.hidden), true};
            const auto down = propagate_down(p, h, Propagation::Mean, unused);
            const auto ref = oracle::visible_marginals(p, h.values);
            for (int i = 0; i < p.visible; ++i) CHECK(std::abs(down.values[i] - ref[i]) < 1e-9);
        }
    }
}

TEST_CASE("sampled states are binary and follow the means") {
    Rng rng(13);
    auto p = random_dense(rng, 1, 2);
    p.hidden_bias[0] = 0.3f;
    p.weights = {0.0f, 0.0f};
    const LayerState v{{1, 0}, true};
    double ones = 0;
    for (int t = 0; t < 20000; ++t) {
        const auto h = propagate_up(p, v, Propagation::Sample, rng);
        CHECK(h.valid());
        ones += h.values[0];
    }
    CHECK(ones / 20000 == doctest::Approx(logistic(0.3)).epsilon(0.03));
}

TEST_CASE("label posterior sums out the top hidden units exactly") {
    Rng rng(17);
    for (int t = 0; t < 10; ++t) {
        TopLayerParams p(4, 3, 3, 2);
        for (auto* x : {&p.feature_weights, &p.label_weights, &p.hidden_bias, &p.feature_bias, &p.label_bias})
            for (auto& w : *x) w = static_cast<float>(rng.normal(0, 1));
        const auto f = random_bits(rng, 3);
        const auto got = label_posterior(p, f);
        const auto ref = oracle::label_posterior(p, f);
        CHECK_NOTHROW(got.validate());
        for (int k = 0; k < 3; ++k) CHECK(got.probs[k] == doctest::Approx(ref[k]).epsilon(1e-9));
    }
}

TEST_CASE("top joint step respects a clamped label") {
    Rng rng(19);
    const TopLayerParams p(5, 4, 3, 10);
    const LayerState f{{1, 0, 1, 1}, true};
    for (int t = 0; t < 50; ++t) {
        const auto s = top_joint_step(p, f, 2, true, rng);
        CHECK(s.label == 2);
        CHECK(s.features.valid());
        CHECK(s.hidden.valid());
    }
    CHECK_THROWS_AS(top_joint_step(p, f, std::nullopt, true, rng), InvalidArgument);
    CHECK_THROWS_AS(top_hidden_input(p, f.values, 3), InvalidArgument);
}

TEST_CASE("architectures compose") {
    const auto paper = make_network(Architecture::paper(10), 1);
    REQUIRE(paper.convs.size() == 3);
    CHECK(paper.convs[0].hidden_extent() == 13);
    CHECK(paper.convs[1].hidden_extent() == 5);
    CHECK(paper.convs[2].hidden_extent() == 2);
    CHECK(paper.dense.visible == 512 * 8);
    CHECK(paper.top.label_units() == 100);

    const auto desk = make_network(Architecture::desk(4), 1);
    CHECK(desk.grid_extent() == 16);
    CHECK(desk.architecture().convs.size() == 2);
    CHECK(make_network(Architecture::desk(4), 1) == desk);

    CHECK_THROWS_AS(ConvLayerParams(4, 1, 4, 2, 15), InvalidArgument);
    CHECK_THROWS_AS(ConvLayerParams(4, 1, 9, 1, 8), InvalidArgument);
    auto broken = desk;
    broken.dense = DenseLayerParams(64, 10);
    CHECK_THROWS_AS(broken.validate(), InvalidArgument);
}

TEST_CASE("checkpoint round trip and corruption") {
    auto net = make_network(Architecture::desk(3), 9);
    net.head = ClassifierHead{3, 64, std::vector<float>(192, 0.25f), {0.1f, 0.2f, 0.3f}};
    const auto bytes = encode_checkpoint(net);
    CHECK(decode_checkpoint(bytes) == net);

    auto code_of = [](std::vector<char> b) {
        try {
            decode_checkpoint(std::move(b));
        } catch (const CheckpointError& e) {
            return e.code();
        }
        FAIL("corrupt checkpoint was accepted");
        return CheckpointError::Code::Io;
    };
    CHECK(code_of({bytes.begin(), bytes.begin() + bytes.size() / 2}) == CheckpointError::Code::Truncated);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK(code_of(magic) == CheckpointError::Code::BadMagic);
    auto version = bytes;
    version[4] = 7;
    CHECK(code_of(version) == CheckpointError::Code::VersionMismatch);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK(code_of(trailing) == CheckpointError::Code::ShapeInconsistent);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/net.cdb"), CheckpointError);
}
