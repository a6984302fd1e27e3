#include "shapenet/nbv.hpp"

#include <cmath>
#include <sstream>

#include "shapenet/error.hpp"
#include "shapenet/inference.hpp"
#include "shapenet/parallel.hpp"
#include <json.hpp>

namespace shapenet {

double recognition_entropy(const LabelDistribution& dist) {
    double h = 0;
    for (double p : dist.probs) {
        if (p < 0 || !std::isfinite(p)) throw InvalidArgument("probability must be finite and non-negative");
        if (p > 0) h -= p * std::log(p);
    }
    return h < 0 ? 0.0 : h;
}

void NbvBudget::validate() const {
    if (outer_samples < 1 || inner_particles < 1 || outer_iterations < 1 || inner_iterations < 1 ||
        classify_particles < 1 || classify_iterations < 1)
        throw InvalidArgument("NBV budgets must be at least 1");
}

namespace {

constexpr std::uint64_t kSeedEntropy = 1, kSeedCompletions = 2;

struct SharedSamples {
    double entropy = 0;
    std::uint64_t inner_seed = 0;
    std::vector<VoxelGrid> completions;
};

SharedSamples draw_samples(const NetworkParams& net, const ObservationGrid& obs, const NbvBudget& budget,
                           std::uint64_t seed, int threads) {
    budget.validate();
    SharedSamples s;
    // The same inner seed scores H and every augmented observation, so the
    // chains of nearly identical observations stay coupled.
    s.inner_seed = derive_seed(seed, {kSeedEntropy});
    s.entropy = recognition_entropy(
        classify(net, obs, budget.inner_particles, budget.inner_iterations, s.inner_seed, threads));
    if (obs.count(VoxelState::Unknown) > 0)
        s.completions = gibbs_complete(net, obs, budget.outer_iterations, budget.outer_samples,
                                       derive_seed(seed, {kSeedCompletions}), threads)
                            .completions;
    return s;
}

// Entropy after adding the rendering of completion s from `pose`; H itself when nothing new is seen.
double augmented_entropy(const NetworkParams& net, const ObservationGrid& obs, const CameraPose& pose,
                         const VoxelGrid& completion, const SharedSamples& shared, const NbvBudget& budget,
                         const Intrinsics& in) {
    const NewObservation next = new_observed_mask(completion, obs, pose, in);
    if (next.count == 0) return shared.entropy;
    const ObservationGrid aug = apply_new_observation(obs, next);
    return recognition_entropy(classify(net, aug, budget.inner_particles, budget.inner_iterations, shared.inner_seed));
}

std::vector<ViewScore> score_views(const NetworkParams& net, const ObservationGrid& obs,
                                   const std::vector<CameraPose>& poses, const SharedSamples& shared,
                                   const NbvBudget& budget, const Intrinsics& in, int threads) {
    const std::size_t S = static_cast<std::size_t>(budget.outer_samples);
    std::vector<double> ent(poses.size() * S, shared.entropy);
    if (!shared.completions.empty())
        parallel_for(poses.size() * S, threads, [&](std::size_t w) {
            const std::size_t c = w / S, s = w % S;
            ent[w] = augmented_entropy(net, obs, poses[c], shared.completions[s], shared, budget, in);
        });
    std::vector<ViewScore> scores;
    for (std::size_t c = 0; c < poses.size(); ++c) {
        double sum = 0;
        for (std::size_t s = 0; s < S; ++s) sum += ent[c * S + s];
        ViewScore v;
        v.pose = poses[c];
        v.expected_entropy = shared.completions.empty() ? shared.entropy : sum / static_cast<double>(S);
        v.mutual_information = shared.entropy - v.expected_entropy;
        v.samples_used = static_cast<int>(S);
        scores.push_back(v);
    }
    return scores;
}

} // namespace

ViewScore expected_entropy_for_view(const NetworkParams& net, const ObservationGrid& obs, const CameraPose& pose,
                                    const NbvBudget& budget, const Intrinsics& in, std::uint64_t seed, int threads) {
    const SharedSamples shared = draw_samples(net, obs, budget, seed, threads);
    return score_views(net, obs, {pose}, shared, budget, in, threads).front();
}

ViewChoice choose_next_view(const NetworkParams& net, const ObservationGrid& obs,
                            const std::vector<CameraPose>& candidates, const NbvBudget& budget, const Intrinsics& in,
                            std::uint64_t seed, int threads) {
    if (candidates.empty()) throw InvalidArgument("no view candidates");
    const SharedSamples shared = draw_samples(net, obs, budget, seed, threads);
    ViewChoice out;
    out.entropy = shared.entropy;
    out.scores = score_views(net, obs, candidates, shared, budget, in, threads);
    for (std::size_t c = 1; c < out.scores.size(); ++c)
        if (out.scores[c].mutual_information > out.scores[out.best].mutual_information) out.best = c;
    out.pose = candidates[out.best];
    return out;
}

std::string strategy_name(Strategy s) {
    switch (s) {
    case Strategy::MutualInformation: return "mi";
    case Strategy::Random: return "random";
    case Strategy::MaxVisibility: return "max_visibility";
    case Strategy::Farthest: return "farthest";
    case Strategy::Oracle: return "oracle";
    }
    return "unknown";
}

Strategy parse_strategy(const std::string& name) {
    for (Strategy s : {Strategy::MutualInformation, Strategy::Random, Strategy::MaxVisibility, Strategy::Farthest,
                       Strategy::Oracle})
        if (strategy_name(s) == name) return s;
    throw InvalidArgument("unknown strategy '" + name + "' (mi, random, max_visibility, farthest, oracle)");
}

std::size_t baseline_select(Strategy strategy, const ObservationGrid& obs, const std::vector<CameraPose>& candidates,
                            const std::optional<CameraPose>& previous, std::uint64_t seed, const Intrinsics& in) {
    if (candidates.empty()) throw InvalidArgument("no view candidates");
    switch (strategy) {
    case Strategy::Random: {
        Rng rng(derive_seed(seed, {0x4a4dULL}));
        return rng.index(candidates.size());
    }
    case Strategy::Farthest: {
        if (!previous) throw InvalidArgument("farthest strategy needs the previous pose");
        std::size_t best = 0;
        double best_d = -1;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double d = norm(candidates[c].position - previous->position);
            if (d > best_d) best_d = d, best = c;
        }
        return best;
    }
    case Strategy::MaxVisibility: {
        const VoxelGrid proxy = obs.surface_occupancy(0);
        std::size_t best = 0, best_count = 0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const ObservationGrid view = observe(proxy, candidates[c], in);
            std::size_t count = 0;
            for (std::size_t i = 0; i < obs.size(); ++i)
                if (!obs.observed(i) && view.observed(i)) ++count;
            if (c == 0 || count > best_count) best_count = count, best = c;
        }
        return best;
    }
    default: throw InvalidArgument("baseline_select handles random, max_visibility and farthest");
    }
}

std::size_t oracle_select(const NetworkParams& net, const VoxelGrid& true_shape, const ObservationGrid& obs,
                          const std::vector<CameraPose>& candidates, const NbvBudget& budget, const Intrinsics& in,
                          std::uint64_t seed, int threads) {
    if (candidates.empty()) throw InvalidArgument("no view candidates");
    budget.validate();
    std::vector<double> ent(candidates.size());
    const std::uint64_t inner = derive_seed(seed, {kSeedEntropy});
    parallel_for(candidates.size(), threads, [&](std::size_t c) {
        const auto merged = merge_observations(obs, observe(true_shape, candidates[c], in)).merged;
        ent[c] = recognition_entropy(classify(net, merged, budget.inner_particles, budget.inner_iterations, inner));
    });
    std::size_t best = 0;
    for (std::size_t c = 1; c < ent.size(); ++c)
        if (ent[c] < ent[best]) best = c;
    return best;
}

EpisodeLog plan_episode(const NetworkParams& net, const VoxelGrid& true_shape, const CameraPose& initial_pose,
                        int steps, Strategy strategy, const NbvBudget& budget, const EpisodeOptions& options,
                        std::uint64_t seed) {
    if (steps < 1) throw InvalidArgument("an episode needs at least one step");
    budget.validate();
    GridSpec spec;
    spec.dims = true_shape.dims();
    spec.payload_origin = true_shape.payload_origin();
    const double radius = options.radius > 0 ? options.radius : default_view_radius(spec);

    EpisodeLog log;
    ObservationGrid obs(true_shape.dims(), VoxelState::Unknown);
    CameraPose pose = initial_pose;
    double previous_entropy = std::log(static_cast<double>(net.classes()));
    for (int s = 1; s <= steps; ++s) {
        const auto su = static_cast<std::uint64_t>(s);
        obs = merge_observations(obs, observe(true_shape, pose, options.intrinsics)).merged;
        EpisodeStep rec;
        rec.step = s;
        rec.strategy = strategy;
        rec.pose = pose;
        rec.label_dist = classify(net, obs, budget.classify_particles, budget.classify_iterations,
                                  derive_seed(seed, {su, 2}), options.threads);
        rec.entropy_before = previous_entropy;
        rec.entropy_after = recognition_entropy(rec.label_dist);
        rec.unknown_count = obs.count(VoxelState::Unknown);
        previous_entropy = rec.entropy_after;
        log.final_label = rec.label_dist.argmax();
        log.steps.push_back(rec);
        if (s == steps) break;

        const auto candidates =
            generate_view_candidates(options.candidates, radius, derive_seed(seed, {su, 1}), spec, options.look_jitter);
        const std::uint64_t pick_seed = derive_seed(seed, {su, 3});
        switch (strategy) {
        case Strategy::MutualInformation:
            pose = choose_next_view(net, obs, candidates, budget, options.intrinsics, pick_seed, options.threads).pose;
            break;
        case Strategy::Oracle:
            pose = candidates[oracle_select(net, true_shape, obs, candidates, budget, options.intrinsics, pick_seed,
                                            options.threads)];
            break;
        default:
            pose = candidates[baseline_select(strategy, obs, candidates, pose, pick_seed, options.intrinsics)];
            break;
        }
    }
    return log;
}

std::string episode_jsonl(const EpisodeLog& log) {
    std::ostringstream out;
    for (const auto& s : log.steps) {
        nlohmann::json j;
        j["step"] = s.step;
        j["strategy"] = strategy_name(s.strategy);
        j["pose"] = {s.pose.position.x, s.pose.position.y, s.pose.position.z, s.pose.look_at.x, s.pose.look_at.y,
                     s.pose.look_at.z, s.pose.up_hint.x, s.pose.up_hint.y, s.pose.up_hint.z};
        j["entropy_before"] = s.entropy_before;
        j["entropy_after"] = s.entropy_after;
        j["label_probs"] = s.label_dist.probs;
        j["unknown_count"] = s.unknown_count;
        out << j.dump() << '\n';
    }
    return out.str();
}

} // namespace shapenet
