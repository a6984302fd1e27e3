#include "shapenet/inference.hpp"

#include <string>

#include "shapenet/error.hpp"
#include "shapenet/parallel.hpp"

namespace shapenet {

LayerState grid_state(const VoxelGrid& grid) {
    LayerState s{std::vector<double>(grid.size()), true};
    for (std::size_t i = 0; i < grid.size(); ++i) s.values[i] = grid[i] ? 1.0 : 0.0;
    return s;
}

std::vector<LayerState> bottom_up(const NetworkParams& net, const LayerState& input, Propagation mode, Rng& rng) {
    std::vector<LayerState> states;
    states.reserve(net.convs.size() + 1);
    const LayerState* below = &input;
    for (const auto& conv : net.convs) {
        states.push_back(propagate_up(conv, *below, mode, rng));
        below = &states.back();
    }
    states.push_back(propagate_up(net.dense, *below, mode, rng));
    return states;
}

namespace {

void check_dims(const NetworkParams& net, const Dims3& d) {
    const int n = net.grid_extent();
    if (!(d == Dims3::cube(n)))
        throw InvalidArgument("grid dims " + std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z) +
                              " do not match the network input " + std::to_string(n) + "^3");
}

} // namespace

std::vector<float> extract_features(const NetworkParams& net, const VoxelGrid& grid) {
    check_dims(net, grid.dims());
    Rng unused(0);
    const auto states = bottom_up(net, grid_state(grid), Propagation::Mean, unused);
    const auto in = top_hidden_input(net.top, states.back().values, std::nullopt);
    std::vector<float> out(in.size());
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = static_cast<float>(logistic(in[j]));
    return out;
}

std::uint64_t particle_seed(std::uint64_t root, std::size_t index) { return derive_seed(root, {0x9a27ULL, index}); }

Particle run_particle(const NetworkParams& net, const ObservationGrid& obs, int iterations, std::uint64_t seed,
                      std::size_t* clamp_violations) {
    check_dims(net, obs.dims());
    if (iterations < 1) throw InvalidArgument("need at least one Gibbs iteration");
    Rng rng(seed);
    const std::size_t n = obs.size();
    const bool has_unknown = obs.count(VoxelState::Unknown) > 0;

    LayerState x{std::vector<double>(n), true};
    for (std::size_t i = 0; i < n; ++i) {
        switch (obs[i]) {
        case VoxelState::Surface: x.values[i] = 1.0; break;
        case VoxelState::Free: x.values[i] = 0.0; break;
        case VoxelState::Unknown: x.values[i] = rng.bernoulli(0.5) ? 1.0 : 0.0; break;
        }
    }

    Particle particle;
    particle.seed = seed;
    for (int it = 0; it < iterations; ++it) {
        auto states = bottom_up(net, x, Propagation::Sample, rng);
        const LayerState& features = states.back();
        particle.label = sample_category(label_posterior(net.top, features.values), rng);

        auto hin = top_hidden_input(net.top, features.values, particle.label);
        std::vector<double> hprob(hin.size());
        for (std::size_t j = 0; j < hin.size(); ++j) hprob[j] = logistic(hin[j]);
        particle.top_state = activate(std::move(hprob), Propagation::Sample, rng);

        // Nothing to resample when every voxel is observed.
        if (!has_unknown) continue;

        auto fin = top_feature_input(net.top, particle.top_state.values);
        logistic_inplace(fin);
        LayerState down = activate(std::move(fin), Propagation::Sample, rng);
        down = propagate_down(net.dense, down, Propagation::Sample, rng);
        for (auto it_conv = net.convs.rbegin(); it_conv != net.convs.rend(); ++it_conv)
            down = propagate_down(*it_conv, down, Propagation::Sample, rng);

        for (std::size_t i = 0; i < n; ++i) {
            if (obs[i] == VoxelState::Surface) down.values[i] = 1.0;
            else if (obs[i] == VoxelState::Free) down.values[i] = 0.0;
        }
        x = std::move(down);
        if (clamp_violations)
            for (std::size_t i = 0; i < n; ++i)
                if ((obs[i] == VoxelState::Surface && x.values[i] != 1.0) ||
                    (obs[i] == VoxelState::Free && x.values[i] != 0.0))
                    ++*clamp_violations;
    }

    particle.grid = VoxelGrid(obs.dims(), 0);
    for (std::size_t i = 0; i < n; ++i) particle.grid[i] = x.values[i] != 0.0 ? 1 : 0;
    return particle;
}

CompletionResult gibbs_complete(const NetworkParams& net, const ObservationGrid& obs, int iterations, int particles,
                                std::uint64_t seed, int threads) {
    check_dims(net, obs.dims());
    if (iterations < 1) throw InvalidArgument("need at least one Gibbs iteration");
    if (particles < 1) throw InvalidArgument("need at least one particle");
    const auto P = static_cast<std::size_t>(particles);
    std::vector<Particle> results(P);
    std::vector<std::size_t> violations(P, 0);
    parallel_for(P, threads, [&](std::size_t i) {
        results[i] = run_particle(net, obs, iterations, particle_seed(seed, i), &violations[i]);
    });

    CompletionResult out;
    std::vector<std::size_t> counts(static_cast<std::size_t>(net.classes()), 0);
    for (std::size_t i = 0; i < P; ++i) {
        ++counts[static_cast<std::size_t>(results[i].label)];
        out.labels.push_back(results[i].label);
        out.completions.push_back(std::move(results[i].grid));
        out.clamp_violations += violations[i];
    }
    out.label_dist.probs.resize(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        out.label_dist.probs[k] = static_cast<double>(counts[k]) / static_cast<double>(P);
    out.winner = out.label_dist.argmax();
    return out;
}

LabelDistribution classify(const NetworkParams& net, const ObservationGrid& obs, int particles, int iterations,
                           std::uint64_t seed, int threads) {
    return gibbs_complete(net, obs, iterations, particles, seed, threads).label_dist;
}

} // namespace shapenet
