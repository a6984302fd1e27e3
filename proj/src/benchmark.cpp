#include "shapenet/benchmark.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "shapenet/discriminative.hpp"
#include "shapenet/error.hpp"
#include "shapenet/inference.hpp"
#include "shapenet/parallel.hpp"

namespace shapenet {

namespace {

// Viewing angles for the handle toy, in degrees.
constexpr double kHiddenSpread = 10;
constexpr double kSeenSpread = 40;
constexpr double kMinElevation = 0;
constexpr double kMaxElevation = 15;

} // namespace

SyntheticDataset make_synthetic_dataset(const std::vector<ShapeClass>& classes, int samples_per_class,
                                        double test_fraction, const GridSpec& spec, std::uint64_t seed) {
    if (classes.empty() || samples_per_class < 2) throw InvalidArgument("dataset needs classes and >= 2 samples each");
    SyntheticDataset d;
    const auto n_test = static_cast<std::size_t>(std::lround(samples_per_class * test_fraction));
    if (n_test < 1 || n_test >= static_cast<std::size_t>(samples_per_class))
        throw InvalidArgument("test_fraction leaves an empty split");
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<VoxelGrid> grids;
        for (int i = 0; i < samples_per_class; ++i)
            grids.push_back(generate_synthetic(classes[c], derive_seed(seed, {0xda7aULL, c, static_cast<std::uint64_t>(i)}), spec));
        Rng rng(derive_seed(seed, {0x5b17ULL, c}));
        const auto order = shuffled_order(grids.size(), rng);
        for (std::size_t r = 0; r < order.size(); ++r) {
            auto& g = grids[order[r]];
            if (r < n_test) {
                d.test.push_back(std::move(g));
                d.test_labels.push_back(static_cast<int>(c));
            } else {
                d.train.push_back(std::move(g));
                d.train_labels.push_back(static_cast<int>(c));
            }
        }
    }
    return d;
}

VoxelGrid rotate_grid_quarter(const VoxelGrid& grid, int quarters) {
    const Dims3 d = grid.dims();
    if (d.x != d.y) throw InvalidArgument("quarter turns need a square xy footprint");
    const int q = ((quarters % 4) + 4) % 4;
    VoxelGrid out(d, grid.payload_origin());
    const int n = d.x;
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                int rx = x, ry = y;
                for (int i = 0; i < q; ++i) {
                    const int t = rx;
                    rx = n - 1 - ry;
                    ry = t;
                }
                out.set(rx, ry, z, grid.at(x, y, z));
            }
    return out;
}

ObservationGrid random_view(const VoxelGrid& shape, const GridSpec& spec, std::uint64_t seed) {
    const auto pose = generate_view_candidates(1, default_view_radius(spec), seed, spec).front();
    return observe(shape, pose, default_intrinsics(spec));
}

CameraPose orbit_pose(const GridSpec& spec, double azimuth, double elevation, double radius) {
    const Vec3 c = spec.grid_center();
    const Vec3 dir{std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
    return {c + dir * radius, c, {0, 0, 1}};
}

std::vector<NbvEpisodeSpec> make_handle_episodes(std::size_t n, std::size_t candidates, const GridSpec& spec,
                                                 std::uint64_t seed) {
    if (candidates < 2) throw InvalidArgument("the handle toy needs at least two candidates");
    const double r = default_view_radius(spec), deg = std::numbers::pi / 180;
    std::vector<NbvEpisodeSpec> out;
    for (std::size_t e = 0; e < n; ++e) {
        const int label = static_cast<int>(e % 2);
        const ShapeClass cls = label ? ShapeClass::BlockWithHandle : ShapeClass::Block;
        auto shape = generate_synthetic_shape(cls, derive_seed(seed, {0x4a1ULL, e}), spec);
        Rng rng(derive_seed(seed, {0x4a2ULL, e}));
        const int side = shape.handle_side ? shape.handle_side : (rng.bernoulli(0.5) ? 1 : -1);
        // Azimuth pointing away from the handle side.
        const double away = side > 0 ? std::numbers::pi : 0.0;
        NbvEpisodeSpec ep{std::move(shape.grid), label, {}, {}};
        ep.initial = orbit_pose(spec, away + rng.uniform(-kHiddenSpread, kHiddenSpread) * deg,
                                rng.uniform(kMinElevation, kMaxElevation) * deg, r);
        ep.candidates.push_back(orbit_pose(spec, away + std::numbers::pi + rng.uniform(-kSeenSpread, kSeenSpread) * deg,
                                           rng.uniform(kMinElevation, kMaxElevation) * deg, r));
        while (ep.candidates.size() < candidates)
            ep.candidates.push_back(orbit_pose(spec, away + rng.uniform(-kHiddenSpread, kHiddenSpread) * deg,
                                               rng.uniform(kMinElevation, kMaxElevation) * deg, r));
        for (std::size_t i = ep.candidates.size(); i > 1; --i) std::swap(ep.candidates[i - 1], ep.candidates[rng.index(i)]);
        out.push_back(std::move(ep));
    }
    return out;
}

namespace {

int majority(const std::vector<int>& votes, int classes) {
    std::vector<int> count(static_cast<std::size_t>(classes), 0);
    for (int v : votes) ++count[static_cast<std::size_t>(v)];
    return static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
}

FeatureMatrix features_of(const NetworkParams& net, const std::vector<VoxelGrid>& grids, int threads) {
    FeatureMatrix out(grids.size());
    parallel_for(grids.size(), threads, [&](std::size_t i) { out[i] = extract_features(net, grids[i]); });
    return out;
}

} // namespace

BenchmarkResult desk_benchmark(const RunConfig& cfg) {
    cfg.validate();
    if (!cfg.seed_set) throw InvalidArgument("the benchmark needs an explicit seed");
    const auto t0 = std::chrono::steady_clock::now();
    const GridSpec spec = cfg.architecture == "paper" ? GridSpec::paper() : GridSpec::desk();
    const int K = static_cast<int>(cfg.classes.size());
    const int T = cfg.threads;
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;

    BenchmarkResult res;
    MetricsReport& rep = res.report;
    std::string stage = "data";
    std::ostringstream diag;
    diag << diagnostics_csv_header() << '\n';
    const DiagnosticsSink sink = [&](const EpochDiagnostics& d) { diag << diagnostics_csv_line(d) << '\n'; };

    try {
        const SyntheticDataset data =
            make_synthetic_dataset(cfg.classes, cfg.samples_per_class, cfg.test_fraction, spec, cfg.seed);

        stage = "pretrain";
        const Architecture arch = cfg.architecture == "paper" ? Architecture::paper(K) : Architecture::desk(K);
        NetworkParams net = make_network(arch, derive_seed(cfg.seed, {0x1717ULL}));
        net = pretrain(std::move(net), data.train, data.train_labels, tc, sink);
        if (cfg.wake_sleep) {
            stage = "wake_sleep";
            net = wake_sleep_finetune(std::move(net), data.train, data.train_labels, tc, sink);
        }
        res.generative = net;

        stage = "recognition";
        {
            std::vector<int> pred(data.test.size());
            parallel_for(data.test.size(), 1, [&](std::size_t i) {
                pred[i] = classify(net, ObservationGrid::from_occupancy(data.test[i]), cfg.eval_particles,
                                   cfg.eval_iterations, derive_seed(cfg.seed, {0x61bbULL, i}), T)
                              .argmax();
            });
            const auto r = score_predictions(pred, data.test_labels, K);
            rep.extra["gibbs_full_mean_category_accuracy"] = r.mean_category_accuracy;
            rep.extra["gibbs_full_instance_accuracy"] = r.instance_accuracy;
        }

        stage = "classification";
        {
            // Four quarter-turn poses per model.
            std::vector<VoxelGrid> train_poses, test_poses;
            std::vector<int> train_y, test_y;
            for (std::size_t i = 0; i < data.train.size(); ++i)
                for (int q = 0; q < 4; ++q) {
                    train_poses.push_back(rotate_grid_quarter(data.train[i], q));
                    train_y.push_back(data.train_labels[i]);
                }
            for (std::size_t i = 0; i < data.test.size(); ++i)
                for (int q = 0; q < 4; ++q) {
                    test_poses.push_back(rotate_grid_quarter(data.test[i], q));
                    test_y.push_back(data.test_labels[i]);
                }
            const auto train_f = features_of(net, train_poses, T);
            const auto test_f = features_of(net, test_poses, T);
            const auto r = eval_classification(train_f, train_y, test_f, test_y, K, cfg.svm);
            rep.per_category_accuracy = r.per_category;
            rep.mean_category_accuracy = r.mean_category_accuracy;
            rep.extra["svm_full_instance_accuracy"] = r.instance_accuracy;
            std::vector<int> model_pred;
            for (std::size_t i = 0; i < data.test.size(); ++i)
                model_pred.push_back(majority({r.predictions.begin() + static_cast<std::ptrdiff_t>(4 * i),
                                               r.predictions.begin() + static_cast<std::ptrdiff_t>(4 * i + 4)},
                                              K));
            rep.extra["svm_full_model_majority_accuracy"] =
                score_predictions(model_pred, data.test_labels, K).mean_category_accuracy;

            stage = "retrieval";
            const auto ret = eval_retrieval(test_f, test_y, T);
            rep.retrieval_auc = ret.auc;
            rep.retrieval_map = ret.map;
            res.pr_curves = ret.class_curves;
        }

        stage = "views";
        {
            std::vector<ObservationGrid> train_views, test_views;
            std::vector<int> train_vy;
            for (std::size_t i = 0; i < data.train.size(); ++i)
                for (int v = 0; v < cfg.train_views; ++v) {
                    train_views.push_back(
                        random_view(data.train[i], spec, derive_seed(cfg.seed, {0x7a1ULL, i, static_cast<std::uint64_t>(v)})));
                    train_vy.push_back(data.train_labels[i]);
                }
            for (std::size_t i = 0; i < data.test.size(); ++i)
                test_views.push_back(random_view(data.test[i], spec, derive_seed(cfg.seed, {0x7e5ULL, i})));

            const KnnVoxelIndex knn(data.train, data.train_labels);
            std::vector<int> knn_pred;
            for (const auto& v : test_views) knn_pred.push_back(knn.classify(v, cfg.knn_k));
            rep.extra["knn_view_accuracy"] = score_predictions(knn_pred, data.test_labels, K).mean_category_accuracy;

            NetworkParams tuned = net;
            if (cfg.discriminative) {
                stage = "discriminative";
                tuned = discriminative_finetune(net, train_views, train_vy, tc, sink);
                std::vector<int> soft_pred;
                for (const auto& v : test_views) soft_pred.push_back(discriminative_predict(tuned, v).argmax());
                rep.extra["softmax_view_accuracy"] =
                    score_predictions(soft_pred, data.test_labels, K).mean_category_accuracy;
            }

            stage = "view_features";
            auto binarized = [](const std::vector<ObservationGrid>& views) {
                std::vector<VoxelGrid> out;
                for (const auto& v : views) out.push_back(v.surface_occupancy(0));
                return out;
            };
            const auto train_bin = binarized(train_views), test_bin = binarized(test_views);
            const auto r = eval_classification(features_of(tuned, train_bin, T), train_vy,
                                               features_of(tuned, test_bin, T), data.test_labels, K, cfg.svm);
            rep.extra["svm_view_accuracy"] = r.mean_category_accuracy;
            rep.extra["svm_view_minus_knn"] = r.mean_category_accuracy - rep.extra["knn_view_accuracy"];
        }

        if (cfg.nbv_episodes_per_class > 0 && !cfg.strategies.empty()) {
            stage = "nbv";
            const auto episodes =
                make_nbv_episodes(data.test, data.test_labels, static_cast<std::size_t>(cfg.nbv_episodes_per_class),
                                  cfg.candidates, spec, derive_seed(cfg.seed, {0x4b7ULL}));
            const auto table =
                eval_nbv(net, episodes, cfg.strategies, cfg.nbv, default_intrinsics(spec), derive_seed(cfg.seed, {0x4b8ULL}), T);
            rep.nbv_accuracy["single_view"] = table.single_view_accuracy;
            for (const auto& row : table.rows) rep.nbv_accuracy[strategy_name(row.strategy)] = row.accuracy;
        }
    } catch (const Error& e) {
        rep.failed_stage = stage + ": " + e.what();
    }
    res.diagnostics_csv = diag.str();
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace shapenet
