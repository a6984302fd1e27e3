// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion names as
// arguments to run a subset; the process exits non-zero if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "shapenet/benchmark.hpp"
#include "shapenet/camera.hpp"
#include "shapenet/cdbn.hpp"
#include "shapenet/cli.hpp"
#include "shapenet/config.hpp"
#include "shapenet/discriminative.hpp"
#include "shapenet/error.hpp"
#include "shapenet/eval.hpp"
#include "shapenet/geometry.hpp"
#include "shapenet/inference.hpp"
#include "shapenet/nbv.hpp"
#include "shapenet/rng.hpp"
#include "shapenet/training.hpp"

using namespace shapenet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

const GridSpec kDesk = GridSpec::desk();

int between(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.index(static_cast<std::uint64_t>(hi - lo + 1))); }

std::vector<double> random_bits(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return v;
}

ObservationGrid random_states(Rng& rng, Dims3 d) {
    ObservationGrid o(d);
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double u = rng.uniform();
        o[i] = u < 0.15 ? VoxelState::Surface : u < 0.5 ? VoxelState::Free : VoxelState::Unknown;
    }
    return o;
}

// The desk benchmark feeds three criteria; run it once.
const BenchmarkResult& desk_result() {
    static std::optional<BenchmarkResult> res;
    if (!res) {
        const RunConfig cfg = load_run_config(fs::path(SHAPENET_CONFIG_DIR) / "desk.cfg");
        res = desk_benchmark(cfg);
    }
    return *res;
}

Outcome energy_oracle() {
    const auto t0 = Clock::now();
    Rng rng(3);
    double worst = 0;
    for (int t = 0; t < 100;) {
        const int n = between(rng, 2, 8), k = between(rng, 1, std::min(n, 4)), s = between(rng, 1, 2);
        if ((n - k) % s) continue;
        ConvLayerParams p(between(rng, 1, 3), 2, k, s, n);
        for (auto* x : {&p.filters, &p.hidden_bias, &p.visible_bias})
            for (auto& w : *x) w = static_cast<float>(rng.normal(0, 0.5));
        const LayerState v{random_bits(rng, p.visible_size()), true}, h{random_bits(rng, p.hidden_size()), true};
        const double ref = oracle::conv_energy(p, v.values, h.values);
        worst = std::max(worst, std::abs(conv_energy(p, v, h) - ref) / std::max(1.0, std::abs(ref)));
        ++t;
    }
    const double sec = since(t0);
    return {worst <= 1e-6 && sec < 10, fmt("max relative error %.2e over 100 instances in %.2f s (limits 1e-6, 10 s)", worst, sec)};
}

Outcome conditional_exactness() {
    Rng rng(5), unused(0);
    double worst = 0;
    for (int t = 0; t < 200; ++t) {
        DenseLayerParams p(1, 2);
        for (auto* x : {&p.weights, &p.hidden_bias, &p.visible_bias})
            for (auto& w : *x) w = static_cast<float>(rng.normal(0, 3));
        for (unsigned code = 0; code < 4; ++code) {
            const LayerState v{oracle::bits(code, 2), true};
            worst = std::max(worst, std::abs(propagate_up(p, v, Propagation::Mean, unused).values[0] -
                                             oracle::hidden_marginals(p, v.values)[0]));
        }
        for (unsigned code = 0; code < 2; ++code) {
            const LayerState h{oracle::bits(code, 1), true};
            const auto down = propagate_down(p, h, Propagation::Mean, unused).values;
            const auto ref = oracle::visible_marginals(p, h.values);
            for (int i = 0; i < 2; ++i) worst = std::max(worst, std::abs(down[i] - ref[i]));
        }
    }
    return {worst <= 1e-9, fmt("max deviation from enumeration %.2e over 200 random RBMs (limit 1e-9)", worst)};
}

Outcome gradient_check() {
    const auto t0 = Clock::now();
    Architecture a;
    a.grid_extent = 6;
    a.convs = {{2, 2, 2}};
    a.dense_hidden = 4;
    a.top_hidden = 5;
    a.classes = 3;
    a.dup = 2;
    Rng rng(21);
    auto m = FeedForwardModel::from_network(make_network(a, 31, 0.5), 3);
    for (auto* t : m.tensors())
        for (auto& x : *t) x = rng.normal(0, 0.5);
    std::size_t checked = 0;
    double worst = 0;
    for (int trial = 0; trial < 3; ++trial) {
        const auto input = binarize_observation(random_states(rng, Dims3::cube(6)));
        const int label = trial % 3;
        Gradients g;
        feedforward_loss(m, input, label, &g);
        const double eps = 1e-3;
        auto params = m.tensors();
        for (std::size_t t = 0; t < params.size(); ++t)
            for (std::size_t i = 0; i < params[t]->size(); ++i) {
                const double keep = (*params[t])[i];
                (*params[t])[i] = keep + eps;
                const double up = feedforward_loss(m, input, label);
                (*params[t])[i] = keep - eps;
                const double down = feedforward_loss(m, input, label);
                (*params[t])[i] = keep;
                const double fd = (up - down) / (2 * eps), an = g[t][i];
                const double scale = std::max(std::abs(fd), std::abs(an));
                worst = std::max(worst, scale > 1e-7 ? std::abs(fd - an) / scale : std::abs(fd - an));
                ++checked;
            }
    }
    const double sec = since(t0);
    return {worst < 1e-3 && sec < 30,
            fmt("max relative error %.2e over %zu parameters in %.2f s (limits 1e-3, 30 s)", worst, checked, sec)};
}

Outcome clamp_invariant() {
    const auto net = make_network(Architecture::desk(4), 9, 0.3);
    Rng rng(13);
    std::size_t violations = 0, inconsistent = 0;
    for (int t = 0; t < 4; ++t) {
        // Two rendered views and two arbitrary state patterns.
        const auto obs = t < 2 ? random_view(generate_synthetic(static_cast<ShapeClass>(t), 40 + t, kDesk), kDesk, 50 + t)
                               : random_states(rng, kDesk.dims);
        const auto r = gibbs_complete(net, obs, 50, 100, 70 + t);
        violations += r.clamp_violations;
        for (const auto& c : r.completions) {
            try {
                check_consistent(c, obs);
            } catch (const Error&) {
                ++inconsistent;
            }
        }
    }
    return {violations == 0 && inconsistent == 0,
            fmt("%zu clamp violations, %zu inconsistent completions over 4 observations x 100 particles x 50 iterations",
                violations, inconsistent)};
}

Outcome entropy_mi() {
    const auto t0 = Clock::now();
    Rng rng(17);
    int out_of_bounds = 0;
    for (int t = 0; t < 1000; ++t) {
        const int K = 2 + static_cast<int>(rng.index(39));
        LabelDistribution d{std::vector<double>(static_cast<std::size_t>(K))};
        double s = 0;
        for (auto& p : d.probs) s += p = rng.bernoulli(0.2) ? 0.0 : rng.uniform();
        if (s == 0) d.probs[0] = s = 1;
        for (auto& p : d.probs) p /= s;
        const double h = recognition_entropy(d);
        out_of_bounds += !(h >= 0 && h <= std::log(static_cast<double>(K)));
    }

    const auto& net = desk_result().generative;
    const Intrinsics in = default_intrinsics(kDesk);
    const double radius = default_view_radius(kDesk);
    NbvBudget b;
    b.outer_samples = 20;
    b.inner_particles = 100;
    // Completions and entropy chains get the same length so both draw from the same posterior.
    b.outer_iterations = 5;
    b.inner_iterations = 5;
    b.classify_particles = 100;
    b.classify_iterations = 5;

    int unequal = 0;
    for (int t = 0; t < 4; ++t) {
        const auto g = generate_synthetic(static_cast<ShapeClass>(t), 90 + t, kDesk);
        ObservationGrid full(g.dims());
        for (std::size_t i = 0; i < g.size(); ++i) full[i] = g[i] ? VoxelState::Surface : VoxelState::Free;
        const auto c = choose_next_view(net, full, generate_view_candidates(3, radius, 60 + t, kDesk), b, in, 80 + t);
        for (const auto& s : c.scores) unequal += s.expected_entropy != c.entropy;
    }

    int ok = 0;
    double lowest = 0;
    for (int t = 0; t < 100; ++t) {
        const auto cls = static_cast<ShapeClass>(t % 4);
        const auto g = generate_synthetic(cls, derive_seed(23, {1, static_cast<std::uint64_t>(t)}), kDesk);
        const auto obs = random_view(g, kDesk, derive_seed(23, {2, static_cast<std::uint64_t>(t)}));
        const auto cands = generate_view_candidates(3, radius, derive_seed(23, {3, static_cast<std::uint64_t>(t)}), kDesk);
        const auto c = choose_next_view(net, obs, cands, b, in, derive_seed(23, {4, static_cast<std::uint64_t>(t)}));
        double m = c.scores.front().mutual_information;
        for (const auto& s : c.scores) m = std::min(m, s.mutual_information);
        ok += m >= -0.1;
        lowest = std::min(lowest, m);
    }
    return {out_of_bounds == 0 && unequal == 0 && ok >= 95,
            fmt("%d/1000 entropies outside [0, ln K]; %d fully observed scores with H_i != H; min MI >= -0.1 in "
                "%d/100 trials (need 95, lowest %.3f) at 20 completions x 100 particles; %.0f s",
                out_of_bounds, unequal, ok, lowest, since(t0))};
}

Outcome voxelizer_oracle() {
    Rng rng(29);
    const GridSpec spec = GridSpec::paper();
    int box_bad = 0, sphere_bad = 0;
    for (int t = 0; t < 50; ++t) {
        const Vec3 c{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const Vec3 h{rng.uniform(0.5, 10), rng.uniform(0.5, 10), rng.uniform(0.5, 10)};
        box_bad += voxelize_mesh(make_box(c - h, c + h), spec).grid.count() != oracle::box_center_count(c - h, c + h, spec);
        const double r = rng.uniform(1, 11);
        const auto sphere = make_icosphere(c, r, 2);
        sphere_bad += voxelize_mesh(sphere, spec).grid.count() != oracle::convex_center_count(sphere, spec);
    }
    return {box_bad == 0 && sphere_bad == 0,
            fmt("%d/50 boxes and %d/50 spheres differ from the brute-force center-inside count", box_bad, sphere_bad)};
}

Outcome camera_round_trip() {
    const Intrinsics in = default_intrinsics(kDesk);
    std::size_t false_free = 0, pairs = 0, non_monotone = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto g = generate_synthetic(static_cast<ShapeClass>(s % kShapeClassCount), 300 + s, kDesk);
        std::vector<ObservationGrid> views;
        for (const auto& pose : generate_view_candidates(4, default_view_radius(kDesk), 400 + s, kDesk)) {
            views.push_back(observe(g, pose, in));
            for (std::size_t i = 0; i < g.size(); ++i) false_free += g[i] && views.back()[i] == VoxelState::Free;
        }
        for (const auto& a : views)
            for (const auto& b : views) {
                const auto m = merge_observations(a, b).merged.count(VoxelState::Unknown);
                non_monotone += m > a.count(VoxelState::Unknown) || m > b.count(VoxelState::Unknown);
                ++pairs;
            }
    }
    return {false_free == 0 && non_monotone == 0,
            fmt("%zu false-Free voxels over 50 shapes x 4 views; %zu/%zu merged pairs gained Unknown voxels", false_free,
                non_monotone, pairs)};
}

Outcome desk_recognition() {
    const auto& r = desk_result();
    const auto& x = r.report.extra;
    const double gibbs = x.at("gibbs_full_mean_category_accuracy"), margin = x.at("svm_view_minus_knn");
    const bool ok = r.report.failed_stage.empty() && gibbs >= 0.80 && margin >= 0.05 && r.seconds < 1800;
    return {ok, fmt("gibbs full-shape accuracy %.3f (need 0.80); feature SVM %.3f vs voxel k-NN %.3f, margin %.3f "
                    "(need 0.05); pipeline %.0f s (limit 1800 s)",
                    gibbs, x.at("svm_view_accuracy"), x.at("knn_view_accuracy"), margin, r.seconds)};
}

Outcome nbv_discrimination() {
    const auto t0 = Clock::now();
    const RunConfig cfg = load_run_config(fs::path(SHAPENET_CONFIG_DIR) / "handle.cfg");
    const auto data = make_synthetic_dataset(cfg.classes, cfg.samples_per_class, cfg.test_fraction, kDesk, cfg.seed);
    const auto arch = Architecture::desk(static_cast<int>(cfg.classes.size()));
    NetworkParams net = pretrain(make_network(arch, derive_seed(cfg.seed, {0x1717ULL})), data.train, data.train_labels, cfg.train);
    if (cfg.wake_sleep) net = wake_sleep_finetune(std::move(net), data.train, data.train_labels, cfg.train);
    const double train_sec = since(t0);

    const auto episodes = make_handle_episodes(100, cfg.candidates, kDesk, derive_seed(cfg.seed, {0xe915ULL}));
    const auto tab = eval_nbv(net, episodes, {Strategy::MutualInformation, Strategy::Random}, cfg.nbv,
                              default_intrinsics(kDesk), derive_seed(cfg.seed, {0x5eedULL}), cfg.threads);
    const double mi = tab.rows[0].accuracy, random = tab.rows[1].accuracy, sec = since(t0);
    return {mi - random >= 0.10 && mi > tab.single_view_accuracy && sec < 3600,
            fmt("two-view accuracy MI %.2f, random %.2f (need +0.10), single view %.2f over %zu paired episodes; "
                "%.0f s incl. %.0f s training (limit 3600 s)",
                mi, random, tab.single_view_accuracy, tab.episodes, sec, train_sec)};
}

Outcome retrieval_math() {
    const double ap = average_precision({1, 0, 1, 0, 1, 0});
    std::size_t curves = 0, bad = 0;
    auto check = [&](const std::vector<double>& c) {
        ++curves;
        for (std::size_t i = 1; i < c.size(); ++i)
            if (c[i] > c[i - 1]) {
                ++bad;
                break;
            }
    };
    Rng rng(31);
    for (int t = 0; t < 500; ++t) {
        std::vector<char> rel(2 + rng.index(60));
        for (auto& r : rel) r = rng.bernoulli(0.3);
        rel[rng.index(rel.size())] = 1;
        check(interpolated_precision(rel));
    }
    FeatureMatrix x;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
        std::vector<float> f(5);
        for (auto& v : f) v = static_cast<float>(rng.normal(0, 1) + (i % 3 == 0 ? 0.7 : 0.0));
        x.push_back(std::move(f));
        y.push_back(i % 3);
    }
    for (const auto& [label, c] : eval_retrieval(x, y).class_curves) check(c);
    for (const auto& [label, c] : desk_result().pr_curves) check(c);
    return {std::abs(ap - 0.7556) <= 1e-4 && bad == 0,
            fmt("AP of the alternating ranking %.6f (target 0.7556 +- 1e-4); %zu/%zu curves with rising precision", ap, bad,
                curves)};
}

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "shapenet_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "seed = 11\nclasses = block, sphere, pyramid\nsamples_per_class = 10\ntest_fraction = 0.3\n"
               "epochs_per_layer = 2\ntop_epochs = 5\nfinetune_epochs = 1\ndiscriminative_epochs = 2\n"
               "eval_particles = 4\neval_iterations = 2\ntrain_views = 1\nnbv_episodes_per_class = 1\n"
               "candidates = 3\nouter_samples = 3\ninner_particles = 4\nouter_iterations = 2\ninner_iterations = 2\n"
               "classify_particles = 4\nclassify_iterations = 2\n";
    }
    const auto d = [&](const std::string& f) { return (dir / f).string(); };
    std::ostringstream sink;
    int failures = 0;
    auto run = [&](std::vector<std::string> args) { failures += run_command(args, sink, sink) != kExitOk; };

    const std::vector<std::string> tags{"a1", "b1", "c8"};
    for (const auto& tag : tags) {
        const std::string threads = tag.substr(1);
        run({"eval", "--config", d("run.cfg"), "--threads", threads, "--out", d(tag + ".json"), "--csv", d(tag + ".csv"),
             "--diagnostics", d(tag + ".diag.csv"), "--model-out", d(tag + ".eval.cdb")});
        run({"train", "--config", d("run.cfg"), "--threads", threads, "--out", d(tag + ".cdb"), "--diagnostics",
             d(tag + ".train.csv")});
        run({"synth", "--class", "pyramid", "--seed", "4", "--out", d("shape.vox")});
        run({"episode", "--model", d(tag + ".cdb"), "--shape", d("shape.vox"), "--steps", "3", "--strategy", "mi",
             "--candidates", "3", "--outer", "3", "--inner", "4", "--seed", "9", "--threads", threads, "--out",
             d(tag + ".jsonl")});
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    int compared = 0, differing = 0;
    for (const char* ext : {".json", ".csv", ".diag.csv", ".eval.cdb", ".cdb", ".train.csv", ".jsonl"}) {
        const auto ref = slurp(dir / (tags[0] + ext));
        if (ref.empty()) ++differing;
        for (std::size_t t = 1; t < tags.size(); ++t) {
            ++compared;
            differing += slurp(dir / (tags[t] + ext)) != ref;
        }
    }
    fs::remove_all(dir);
    return {failures == 0 && differing == 0,
            fmt("%d/%d artifact comparisons differ (checkpoints, reports, diagnostics, episode logs; repeat run and "
                "--threads 1 vs 8); %d failed commands",
                differing, compared, failures)};
}

struct Criterion {
    const char* key;
    const char* name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {"energy", "energy oracle", energy_oracle},
        {"conditionals", "conditional-distribution exactness", conditional_exactness},
        {"gradient", "gradient check", gradient_check},
        {"clamp", "Gibbs clamp invariant", clamp_invariant},
        {"voxelizer", "voxelizer oracle", voxelizer_oracle},
        {"camera", "camera round trip", camera_round_trip},
        {"retrieval", "retrieval math", retrieval_math},
        {"desk", "desk-scale recognition", desk_recognition},
        {"entropy", "entropy/MI invariants", entropy_mi},
        {"nbv", "NBV discrimination", nbv_discrimination},
        {"determinism", "determinism", determinism},
    };
    std::vector<std::string> only(argv + 1, argv + argc);
    int failed = 0, ran = 0;
    for (const auto& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.key) == only.end()) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        ++ran;
        failed += !o.pass;
        std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", ran - failed, ran);
    return failed ? 1 : 0;
}
