#include "shapenet/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "shapenet/benchmark.hpp"
#include "shapenet/binary_io.hpp"
#include "shapenet/checkpoint.hpp"
#include "shapenet/config.hpp"
#include "shapenet/discriminative.hpp"
#include "shapenet/error.hpp"
#include "shapenet/geometry.hpp"
#include "shapenet/inference.hpp"
#include "shapenet/nbv.hpp"
#include <json.hpp>

namespace fs = std::filesystem;

namespace shapenet {

namespace {

using nlohmann::json;

GridSpec preset_spec(const std::string& preset) {
    if (preset == "desk") return GridSpec::desk();
    if (preset == "paper") return GridSpec::paper();
    throw InvalidArgument("unknown preset '" + preset + "' (desk/paper)");
}

std::string label_name(int k, const std::vector<ShapeClass>& classes) {
    if (k >= 0 && static_cast<std::size_t>(k) < classes.size())
        return std::string(shape_class_name(classes[static_cast<std::size_t>(k)]));
    return "class_" + std::to_string(k);
}

std::vector<ShapeClass> default_class_order() {
    std::vector<ShapeClass> c;
    for (int k = 0; k < kShapeClassCount; ++k) c.push_back(static_cast<ShapeClass>(k));
    return c;
}

std::vector<ShapeClass> parse_class_list(const std::string& text) {
    if (text.empty()) return default_class_order();
    std::vector<ShapeClass> out;
    std::stringstream s(text);
    std::string item;
    while (std::getline(s, item, ',')) out.push_back(parse_shape_class(item));
    return out;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Loads a dataset list with one "path label" pair per line.
struct ListedData {
    std::vector<VoxelGrid> grids;
    std::vector<ObservationGrid> observations;
    std::vector<int> grid_labels, observation_labels;
};

ListedData read_data_list(const fs::path& list, const std::vector<ShapeClass>& classes, int pad) {
    std::ifstream f(list);
    if (!f) throw DataError("cannot open data list " + list.string());
    ListedData d;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream s(line);
        std::string path, label_text;
        if (!(s >> path >> label_text))
            throw DataError(list.string() + ":" + std::to_string(line_no) + ": expected 'path label'");
        int label = -1;
        try {
            std::size_t used = 0;
            label = std::stoi(label_text, &used);
            if (used != label_text.size()) label = -1;
        } catch (const std::exception&) {
            const auto cls = parse_shape_class(label_text);
            const auto it = std::find(classes.begin(), classes.end(), cls);
            if (it == classes.end()) throw DataError("class '" + label_text + "' is not in the configured class list");
            label = static_cast<int>(it - classes.begin());
        }
        if (label < 0 || static_cast<std::size_t>(label) >= classes.size())
            throw DataError(list.string() + ":" + std::to_string(line_no) + ": label out of range");
        fs::path p(path);
        if (p.is_relative()) p = list.parent_path() / p;
        if (p.extension() == ".obs") {
            d.observations.push_back(load_observation(p));
            d.observation_labels.push_back(label);
        } else {
            d.grids.push_back(load_voxels(p, pad));
            d.grid_labels.push_back(label);
        }
    }
    if (d.grids.empty() && d.observations.empty()) throw DataError("data list " + list.string() + " is empty");
    return d;
}

RunConfig load_config_with_overrides(const std::string& path, std::optional<std::uint64_t> seed,
                                     std::optional<int> threads) {
    RunConfig cfg = load_run_config(path);
    if (seed) {
        cfg.seed = *seed;
        cfg.train.seed = *seed;
        cfg.svm.seed = *seed;
        cfg.seed_set = true;
    }
    if (threads) cfg.threads = *threads;
    if (!cfg.seed_set) throw InvalidArgument("a seed is required (config key 'seed' or --seed)");
    cfg.validate();
    return cfg;
}

void check_output_parent(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty() && !fs::is_directory(parent))
        throw InvalidArgument("output directory does not exist: " + parent.string());
}

json probs_json(const LabelDistribution& d) { return json(d.probs); }

std::string pose_text(const CameraPose& p) { return format_pose(p); }

} // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"3D shape deep belief network toolkit", "shapenet"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::function<void()> action;

    // voxelize
    std::string vx_mesh, vx_out, vx_preset = "desk";
    double vx_step = 0;
    auto* vx = app.add_subcommand("voxelize", "Voxelize an OFF triangle mesh into a VOX1 grid");
    vx->add_option("--mesh", vx_mesh, "Input OFF mesh")->required();
    vx->add_option("--out", vx_out, "Output VOX1 path; with --rotate-step a _rNNN suffix is added")->required();
    vx->add_option("--preset", vx_preset, "Grid preset: desk (16^3) or paper (30^3)");
    vx->add_option("--rotate-step", vx_step, "Also write rotations about +z every STEP degrees (0 = off)");
    vx->callback([&] {
        action = [&] {
            const auto mesh = read_off(fs::path(vx_mesh));
            const GridSpec base = preset_spec(vx_preset);
            check_output_parent(vx_out);
            std::vector<TriangleMesh> meshes = vx_step > 0 ? rotate_augment(mesh, vx_step) : std::vector{mesh};
            json summary = json::array();
            for (std::size_t r = 0; r < meshes.size(); ++r) {
                const GridSpec spec = fit_grid_spec(meshes[r], base.dims, base.payload_origin);
                const auto vox = voxelize_mesh(meshes[r], spec);
                fs::path path(vx_out);
                if (vx_step > 0) {
                    std::ostringstream suffix;
                    suffix << "_r" << std::setw(3) << std::setfill('0') << std::lround(r * vx_step);
                    path = path.parent_path() / (path.stem().string() + suffix.str() + path.extension().string());
                }
                save_voxels(path, vox.grid);
                summary.push_back({{"path", path.string()}, {"occupied", vox.grid.count()}, {"surface_only", vox.surface_only}});
            }
            out << summary.dump() << '\n';
        };
    });

    // synth
    std::string sy_class, sy_out, sy_obs, sy_depth, sy_view, sy_preset = "desk";
    std::uint64_t sy_seed = 0;
    auto* sy = app.add_subcommand("synth", "Generate a synthetic voxel shape and optionally a rendered view");
    sy->add_option("--class", sy_class, "block, sphere, pyramid, L-bracket or block-with-handle")->required();
    sy->add_option("--seed", sy_seed, "Shape seed")->required();
    sy->add_option("--out", sy_out, "Output VOX1 path")->required();
    sy->add_option("--preset", sy_preset, "Grid preset: desk or paper");
    sy->add_option("--obs-out", sy_obs, "Also write the OBS1 observation of one view");
    sy->add_option("--depth-out", sy_depth, "Also write the DPT1 depth map of that view");
    sy->add_option("--view", sy_view, "Camera pose as nine numbers (position, look-at, up); random when empty");
    sy->callback([&] {
        action = [&] {
            const GridSpec spec = preset_spec(sy_preset);
            const auto shape = generate_synthetic_shape(parse_shape_class(sy_class), sy_seed, spec);
            check_output_parent(sy_out);
            save_voxels(sy_out, shape.grid);
            json j{{"path", sy_out}, {"occupied", shape.grid.count()}, {"handle_side", shape.handle_side}};
            if (!sy_obs.empty() || !sy_depth.empty()) {
                const CameraPose pose =
                    sy_view.empty()
                        ? generate_view_candidates(1, default_view_radius(spec), derive_seed(sy_seed, {0x51e5ULL}), spec)
                              .front()
                        : parse_pose(sy_view);
                const Intrinsics in = default_intrinsics(spec);
                const DepthMap depth = render_depth(shape.grid, pose, in);
                if (!sy_depth.empty()) save_depth(sy_depth, depth);
                if (!sy_obs.empty()) save_observation(sy_obs, depth_to_observation(depth, pose, spec));
                j["view"] = pose_text(pose);
            }
            out << j.dump() << '\n';
        };
    });

    // train
    std::string tr_config, tr_out, tr_data, tr_diag;
    std::optional<std::uint64_t> tr_seed;
    std::optional<int> tr_threads;
    auto* tr = app.add_subcommand("train", "Layer-wise pretraining, optionally followed by wake-sleep fine-tuning");
    tr->add_option("--config", tr_config, "key = value training config")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out, "Output CDB1 checkpoint")->required();
    tr->add_option("--data", tr_data, "Data list with 'path label' lines; synthetic data when empty");
    tr->add_option("--diagnostics", tr_diag, "Per-epoch CSV diagnostics");
    tr->add_option("--seed", tr_seed, "Root seed, overrides the config");
    tr->add_option("--threads", tr_threads, "Worker threads, overrides the config");
    tr->callback([&] {
        action = [&] {
            const RunConfig cfg = load_config_with_overrides(tr_config, tr_seed, tr_threads);
            check_output_parent(tr_out);
            const GridSpec spec = cfg.architecture == "paper" ? GridSpec::paper() : GridSpec::desk();
            std::vector<VoxelGrid> grids;
            std::vector<int> labels;
            if (tr_data.empty()) {
                auto d = make_synthetic_dataset(cfg.classes, cfg.samples_per_class, cfg.test_fraction, spec, cfg.seed);
                grids = std::move(d.train);
                labels = std::move(d.train_labels);
            } else {
                auto d = read_data_list(tr_data, cfg.classes, spec.payload_origin);
                grids = std::move(d.grids);
                labels = std::move(d.grid_labels);
            }
            const int K = static_cast<int>(cfg.classes.size());
            const Architecture arch = cfg.architecture == "paper" ? Architecture::paper(K) : Architecture::desk(K);
            std::ostringstream diag;
            diag << diagnostics_csv_header() << '\n';
            const DiagnosticsSink sink = [&](const EpochDiagnostics& d) { diag << diagnostics_csv_line(d) << '\n'; };
            NetworkParams net = pretrain(make_network(arch, derive_seed(cfg.seed, {0x1717ULL})), grids, labels, cfg.train, sink);
            if (cfg.wake_sleep) net = wake_sleep_finetune(std::move(net), grids, labels, cfg.train, sink);
            save_checkpoint(net, tr_out);
            if (!tr_diag.empty()) write_text(tr_diag, diag.str());
            out << json{{"checkpoint", tr_out}, {"training_items", grids.size()}}.dump() << '\n';
        };
    });

    // finetune
    std::string ft_config, ft_model, ft_out, ft_data, ft_mode = "wake_sleep", ft_diag;
    std::optional<std::uint64_t> ft_seed;
    std::optional<int> ft_threads;
    auto* ft = app.add_subcommand("finetune", "Wake-sleep or discriminative fine-tuning of a checkpoint");
    ft->add_option("--config", ft_config, "key = value training config")->required()->check(CLI::ExistingFile);
    ft->add_option("--model", ft_model, "Input CDB1 checkpoint")->required()->check(CLI::ExistingFile);
    ft->add_option("--out", ft_out, "Output CDB1 checkpoint")->required();
    ft->add_option("--mode", ft_mode, "wake_sleep or discriminative")->check(CLI::IsMember({"wake_sleep", "discriminative"}));
    ft->add_option("--data", ft_data, "Data list (.vox or .obs entries); synthetic data when empty");
    ft->add_option("--diagnostics", ft_diag, "Per-epoch CSV diagnostics");
    ft->add_option("--seed", ft_seed, "Root seed, overrides the config");
    ft->add_option("--threads", ft_threads, "Worker threads, overrides the config");
    ft->callback([&] {
        action = [&] {
            const RunConfig cfg = load_config_with_overrides(ft_config, ft_seed, ft_threads);
            check_output_parent(ft_out);
            NetworkParams net = load_checkpoint(ft_model);
            const GridSpec spec = cfg.architecture == "paper" ? GridSpec::paper() : GridSpec::desk();
            ListedData d;
            if (ft_data.empty()) {
                auto s = make_synthetic_dataset(cfg.classes, cfg.samples_per_class, cfg.test_fraction, spec, cfg.seed);
                d.grids = std::move(s.train);
                d.grid_labels = std::move(s.train_labels);
            } else {
                d = read_data_list(ft_data, cfg.classes, spec.payload_origin);
            }
            std::ostringstream diag;
            diag << diagnostics_csv_header() << '\n';
            const DiagnosticsSink sink = [&](const EpochDiagnostics& e) { diag << diagnostics_csv_line(e) << '\n'; };
            if (ft_mode == "wake_sleep") {
                if (d.grids.empty()) throw DataError("wake-sleep fine-tuning needs voxel grids");
                net = wake_sleep_finetune(std::move(net), d.grids, d.grid_labels, cfg.train, sink);
            } else {
                auto obs = d.observations;
                auto labels = d.observation_labels;
                for (std::size_t i = 0; i < d.grids.size(); ++i)
                    for (int v = 0; v < cfg.train_views; ++v) {
                        obs.push_back(random_view(d.grids[i], spec, derive_seed(cfg.seed, {0x7a1ULL, i, static_cast<std::uint64_t>(v)})));
                        labels.push_back(d.grid_labels[i]);
                    }
                net = discriminative_finetune(std::move(net), obs, labels, cfg.train, sink);
            }
            save_checkpoint(net, ft_out);
            if (!ft_diag.empty()) write_text(ft_diag, diag.str());
            out << json{{"checkpoint", ft_out}, {"mode", ft_mode}}.dump() << '\n';
        };
    });

    // complete / classify share their inputs
    std::string in_model, in_obs, cp_out_dir, cl_out, label_names;
    int particles = 100, iters = 50, threads = 1;
    std::uint64_t seed = 0;
    int cp_keep = -1;
    auto add_inference_options = [&](CLI::App* sub) {
        sub->add_option("--model", in_model, "CDB1 checkpoint")->required()->check(CLI::ExistingFile);
        sub->add_option("--obs", in_obs, "OBS1 observation")->required()->check(CLI::ExistingFile);
        sub->add_option("--particles", particles, "Gibbs particles")->check(CLI::PositiveNumber);
        sub->add_option("--iters", iters, "Up-down iterations per particle")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "Root seed")->required();
        sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--labels", label_names, "Comma-separated class names in label order");
    };
    auto* cp = app.add_subcommand("complete", "Gibbs shape completion and recognition from an observation");
    add_inference_options(cp);
    cp->add_option("--out-dir", cp_out_dir, "Directory for completion grids and summary.jsonl")->required();
    cp->add_option("--keep", cp_keep, "Completions to write (-1 = all)");
    cp->callback([&] {
        action = [&] {
            const auto classes = parse_class_list(label_names);
            const NetworkParams net = load_checkpoint(in_model);
            const ObservationGrid obs = load_observation(in_obs);
            const auto res = gibbs_complete(net, obs, iters, particles, seed, threads);
            ensure_dir(cp_out_dir);
            std::ostringstream summary;
            const std::size_t keep =
                cp_keep < 0 ? res.completions.size() : std::min<std::size_t>(res.completions.size(), static_cast<std::size_t>(cp_keep));
            for (std::size_t i = 0; i < res.completions.size(); ++i) {
                json j{{"particle", i}, {"label", res.labels[i]}, {"label_name", label_name(res.labels[i], classes)}};
                if (i < keep) {
                    std::ostringstream name;
                    name << "completion_" << std::setw(4) << std::setfill('0') << i << ".vox";
                    save_voxels(fs::path(cp_out_dir) / name.str(), res.completions[i]);
                    j["path"] = name.str();
                }
                summary << j.dump() << '\n';
            }
            write_text(fs::path(cp_out_dir) / "summary.jsonl", summary.str());
            out << json{{"winner", res.winner}, {"winner_name", label_name(res.winner, classes)},
                        {"label_probs", probs_json(res.label_dist)}}
                       .dump()
                << '\n';
        };
    });

    auto* cl = app.add_subcommand("classify", "Label distribution of an observation by particle voting");
    add_inference_options(cl);
    cl->add_option("--out", cl_out, "Also write the JSON result to this path");
    cl->callback([&] {
        action = [&] {
            const auto classes = parse_class_list(label_names);
            const auto dist = classify(load_checkpoint(in_model), load_observation(in_obs), particles, iters, seed, threads);
            const json j{{"winner", dist.argmax()}, {"winner_name", label_name(dist.argmax(), classes)},
                         {"label_probs", probs_json(dist)}, {"entropy", recognition_entropy(dist)}};
            if (!cl_out.empty()) {
                check_output_parent(cl_out);
                write_text(cl_out, j.dump() + "\n");
            }
            out << j.dump() << '\n';
        };
    });

    // nbv
    std::string nb_model, nb_obs, nb_out, nb_poses, nb_preset = "desk";
    std::size_t nb_candidates = 8;
    NbvBudget nb_budget;
    std::uint64_t nb_seed = 0;
    int nb_threads = 1;
    auto add_budget = [&](CLI::App* sub, NbvBudget& b) {
        sub->add_option("--outer", b.outer_samples, "Completions per decision")->check(CLI::PositiveNumber);
        sub->add_option("--inner", b.inner_particles, "Particles per conditional entropy")->check(CLI::PositiveNumber);
        sub->add_option("--outer-iters", b.outer_iterations, "Gibbs iterations for completions")->check(CLI::PositiveNumber);
        sub->add_option("--inner-iters", b.inner_iterations, "Gibbs iterations for entropies")->check(CLI::PositiveNumber);
        sub->add_option("--classify-particles", b.classify_particles, "Particles for recognition")->check(CLI::PositiveNumber);
        sub->add_option("--classify-iters", b.classify_iterations, "Iterations for recognition")->check(CLI::PositiveNumber);
    };
    auto* nb = app.add_subcommand("nbv", "Score candidate views by mutual information and pick the best");
    nb->add_option("--model", nb_model, "CDB1 checkpoint")->required()->check(CLI::ExistingFile);
    nb->add_option("--obs", nb_obs, "OBS1 observation")->required()->check(CLI::ExistingFile);
    nb->add_option("--candidates", nb_candidates, "Random candidate views when --poses is absent")->check(CLI::PositiveNumber);
    nb->add_option("--poses", nb_poses, "File with one nine-number pose per line");
    nb->add_option("--preset", nb_preset, "Grid preset for camera geometry: desk or paper");
    nb->add_option("--seed", nb_seed, "Root seed")->required();
    nb->add_option("--threads", nb_threads, "Worker threads")->check(CLI::PositiveNumber);
    nb->add_option("--out", nb_out, "Also write the JSON result to this path");
    add_budget(nb, nb_budget);
    nb->callback([&] {
        action = [&] {
            const NetworkParams net = load_checkpoint(nb_model);
            const ObservationGrid obs = load_observation(nb_obs);
            GridSpec spec = preset_spec(nb_preset);
            if (!(spec.dims == obs.dims())) throw InvalidArgument("observation dims do not match the preset");
            std::vector<CameraPose> poses;
            if (!nb_poses.empty()) {
                std::ifstream f(nb_poses);
                if (!f) throw DataError("cannot open pose list " + nb_poses);
                std::string line;
                while (std::getline(f, line))
                    if (!line.empty() && line[0] != '#') poses.push_back(parse_pose(line));
            } else {
                poses = generate_view_candidates(nb_candidates, default_view_radius(spec), derive_seed(nb_seed, {0xcadULL}), spec);
            }
            const auto choice = choose_next_view(net, obs, poses, nb_budget, default_intrinsics(spec), nb_seed, nb_threads);
            json scores = json::array();
            for (const auto& s : choice.scores)
                scores.push_back({{"pose", pose_text(s.pose)}, {"expected_entropy", s.expected_entropy},
                                  {"mutual_information", s.mutual_information}, {"samples", s.samples_used}});
            const json j{{"best", choice.best}, {"pose", pose_text(choice.pose)}, {"entropy", choice.entropy}, {"scores", scores}};
            if (!nb_out.empty()) {
                check_output_parent(nb_out);
                write_text(nb_out, j.dump(2) + "\n");
            }
            out << j.dump() << '\n';
        };
    });

    // episode
    std::string ep_model, ep_shape, ep_out, ep_initial, ep_strategy = "mi", ep_preset = "desk";
    int ep_steps = 2, ep_threads = 1;
    std::size_t ep_candidates = 8;
    NbvBudget ep_budget;
    std::uint64_t ep_seed = 0;
    auto* ep = app.add_subcommand("episode", "Simulated multi-view recognition episode on a known shape");
    ep->add_option("--model", ep_model, "CDB1 checkpoint")->required()->check(CLI::ExistingFile);
    ep->add_option("--shape", ep_shape, "VOX1 ground-truth shape")->required()->check(CLI::ExistingFile);
    ep->add_option("--steps", ep_steps, "Views per episode")->check(CLI::PositiveNumber);
    ep->add_option("--strategy", ep_strategy, "mi, random, max_visibility, farthest or oracle");
    ep->add_option("--initial", ep_initial, "Initial pose as nine numbers; random when empty");
    ep->add_option("--candidates", ep_candidates, "Fresh candidates per step")->check(CLI::PositiveNumber);
    ep->add_option("--preset", ep_preset, "Grid preset: desk or paper");
    ep->add_option("--seed", ep_seed, "Root seed")->required();
    ep->add_option("--threads", ep_threads, "Worker threads")->check(CLI::PositiveNumber);
    ep->add_option("--out", ep_out, "JSON-lines episode log")->required();
    add_budget(ep, ep_budget);
    ep->callback([&] {
        action = [&] {
            const NetworkParams net = load_checkpoint(ep_model);
            const GridSpec spec = preset_spec(ep_preset);
            const VoxelGrid shape = load_voxels(ep_shape, spec.payload_origin);
            check_output_parent(ep_out);
            const CameraPose initial =
                ep_initial.empty()
                    ? generate_view_candidates(1, default_view_radius(spec), derive_seed(ep_seed, {0x1717ULL}), spec).front()
                    : parse_pose(ep_initial);
            EpisodeOptions opt;
            opt.candidates = ep_candidates;
            opt.intrinsics = default_intrinsics(spec);
            opt.threads = ep_threads;
            const auto log = plan_episode(net, shape, initial, ep_steps, parse_strategy(ep_strategy), ep_budget, opt, ep_seed);
            write_text(ep_out, episode_jsonl(log));
            out << json{{"final_label", log.final_label}, {"steps", log.steps.size()}}.dump() << '\n';
        };
    });

    // eval
    std::string ev_config, ev_out, ev_csv, ev_curves, ev_diag, ev_model_out;
    std::optional<std::uint64_t> ev_seed;
    std::optional<int> ev_threads;
    auto* ev = app.add_subcommand("eval", "End-to-end desk benchmark producing a metrics report");
    ev->add_option("--config", ev_config, "key = value run config")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out, "MetricsReport JSON")->required();
    ev->add_option("--csv", ev_csv, "CSV flattening of the report");
    ev->add_option("--curves-dir", ev_curves, "Directory for per-class PR curve CSVs");
    ev->add_option("--diagnostics", ev_diag, "Training diagnostics CSV");
    ev->add_option("--model-out", ev_model_out, "Also save the trained generative checkpoint");
    ev->add_option("--seed", ev_seed, "Root seed, overrides the config");
    ev->add_option("--threads", ev_threads, "Worker threads, overrides the config");
    ev->callback([&] {
        action = [&] {
            const RunConfig cfg = load_config_with_overrides(ev_config, ev_seed, ev_threads);
            check_output_parent(ev_out);
            const auto res = desk_benchmark(cfg);
            write_text(ev_out, res.report.to_json());
            if (!ev_csv.empty()) write_text(ev_csv, res.report.to_csv());
            if (!ev_diag.empty()) write_text(ev_diag, res.diagnostics_csv);
            if (!ev_model_out.empty() && res.report.failed_stage.empty()) save_checkpoint(res.generative, ev_model_out);
            if (!ev_curves.empty()) {
                ensure_dir(ev_curves);
                for (const auto& [label, curve] : res.pr_curves)
                    write_text(fs::path(ev_curves) / ("pr_" + label_name(label, cfg.classes) + ".csv"), pr_curve_csv(curve));
            }
            out << res.report.to_json();
            if (!res.report.failed_stage.empty()) throw DataError("benchmark stage failed: " + res.report.failed_stage);
        };
    });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return kExitUsage;
    }

    try {
        if (action) action();
        return kExitOk;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        switch (e.kind()) {
        case Error::Kind::Usage: return kExitUsage;
        case Error::Kind::Numeric: return kExitNumeric;
        default: return kExitData;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

} // namespace shapenet
