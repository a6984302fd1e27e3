#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shapenet/checkpoint.hpp"
#include "shapenet/cli.hpp"

using namespace shapenet;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_command(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Scratch directory removed on scope exit.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("shapenet_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

const char* kTinyConfig = R"(seed = 3
classes = block, sphere
samples_per_class = 6
test_fraction = 0.5
epochs_per_layer = 1
top_epochs = 2
finetune_epochs = 1
discriminative_epochs = 1
eval_particles = 2
eval_iterations = 1
train_views = 1
nbv_episodes_per_class = 1
strategies = mi, random
candidates = 2
outer_samples = 2
inner_particles = 2
outer_iterations = 1
inner_iterations = 1
classify_particles = 2
classify_iterations = 1
)";

} // namespace

TEST_CASE("help and usage errors") {
    const auto help = run({"--help"});
    CHECK(help.code == kExitOk);
    for (const char* sub : {"voxelize", "synth", "train", "finetune", "complete", "classify", "nbv", "episode", "eval"})
        CHECK(help.out.find(sub) != std::string::npos);
    CHECK(run({"synth", "--help"}).code == kExitOk);
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"fly"}).code == kExitUsage);
    CHECK(run({"synth", "--class", "block"}).code == kExitUsage);
    const auto bad = run({"synth", "--class", "teapot", "--seed", "1", "--out", "/tmp/never.vox"});
    CHECK(bad.code == kExitUsage);
    CHECK(bad.err.find("teapot") != std::string::npos);
}

TEST_CASE("synth is deterministic and writes observations") {
    TempDir dir("synth");
    for (const char* name : {"a", "b"}) {
        const std::string base = dir / name;
        REQUIRE(run({"synth", "--class", "L-bracket", "--seed", "5", "--out", base + ".vox", "--obs-out", base + ".obs",
                     "--depth-out", base + ".dpt"})
                    .code == kExitOk);
    }
    CHECK(slurp(dir / "a.vox") == slurp(dir / "b.vox"));
    CHECK(slurp(dir / "a.obs") == slurp(dir / "b.obs"));
    CHECK(slurp(dir / "a.dpt") == slurp(dir / "b.dpt"));
    CHECK(run({"synth", "--class", "sphere", "--seed", "5", "--preset", "paper", "--out", dir / "p.vox"}).code == kExitOk);
    CHECK(fs::file_size(dir / "p.vox") > fs::file_size(dir / "a.vox"));
    CHECK(run({"synth", "--class", "block", "--seed", "1", "--out", dir / "missing/x.vox"}).code == kExitUsage);
}

TEST_CASE("voxelize writes rotations") {
    TempDir dir("voxelize");
    spit(dir / "cube.off", "OFF\n8 12 0\n"
                           "0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n"
                           "3 0 2 1\n3 0 3 2\n3 4 5 6\n3 4 6 7\n3 0 1 5\n3 0 5 4\n"
                           "3 2 3 7\n3 2 7 6\n3 1 2 6\n3 1 6 5\n3 0 4 7\n3 0 7 3\n");
    const auto r = run({"voxelize", "--mesh", dir / "cube.off", "--out", dir / "cube.vox", "--rotate-step", "90"});
    CHECK(r.code == kExitOk);
    int written = 0;
    for (const auto& e : fs::directory_iterator(dir.path)) written += e.path().extension() == ".vox";
    CHECK(written >= 4);

    spit(dir / "broken.off", "OFF\n3 1 0\n0 0 0\n");
    CHECK(run({"voxelize", "--mesh", dir / "broken.off", "--out", dir / "b.vox"}).code == kExitData);
}

TEST_CASE("train, inference and planning commands") {
    TempDir dir("pipeline");
    spit(dir / "run.cfg", kTinyConfig);
    REQUIRE(run({"train", "--config", dir / "run.cfg", "--out", dir / "a.cdb", "--diagnostics", dir / "a.csv"}).code ==
            kExitOk);
    REQUIRE(run({"train", "--config", dir / "run.cfg", "--out", dir / "b.cdb", "--threads", "3"}).code == kExitOk);
    CHECK(slurp(dir / "a.cdb") == slurp(dir / "b.cdb"));
    CHECK(!slurp(dir / "a.csv").empty());
    CHECK_NOTHROW(load_checkpoint(dir / "a.cdb"));

    REQUIRE(run({"synth", "--class", "block", "--seed", "2", "--out", dir / "s.vox", "--obs-out", dir / "s.obs"}).code ==
            kExitOk);
    const std::vector<std::string> gibbs{"--model", dir / "a.cdb", "--obs", dir / "s.obs", "--particles", "3",
                                         "--iters", "2", "--seed", "4", "--labels", "block,sphere"};

    auto cl = gibbs;
    cl.insert(cl.begin(), "classify");
    const auto c1 = run(cl), c2 = run(cl);
    REQUIRE(c1.code == kExitOk);
    CHECK(c1.out == c2.out);
    CHECK(nlohmann::json::parse(c1.out).contains("label_probs"));

    auto cp = gibbs;
    cp.insert(cp.begin(), "complete");
    cp.insert(cp.end(), {"--out-dir", dir / "completions"});
    REQUIRE(run(cp).code == kExitOk);
    CHECK(fs::exists(dir / "completions/summary.jsonl"));

    REQUIRE(run({"nbv", "--model", dir / "a.cdb", "--obs", dir / "s.obs", "--candidates", "2", "--outer", "2", "--inner",
                 "2", "--outer-iters", "1", "--inner-iters", "1", "--seed", "6"})
                .code == kExitOk);

    REQUIRE(run({"episode", "--model", dir / "a.cdb", "--shape", dir / "s.vox", "--steps", "2", "--strategy", "farthest",
                 "--candidates", "2", "--outer", "2", "--inner", "2", "--seed", "8", "--out", dir / "ep.jsonl"})
                .code == kExitOk);
    std::istringstream lines(slurp(dir / "ep.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) n += !line.empty();
    CHECK(n == 2);

    REQUIRE(run({"finetune", "--config", dir / "run.cfg", "--model", dir / "a.cdb", "--out", dir / "d.cdb", "--mode",
                 "discriminative"})
                .code == kExitOk);
    CHECK(load_checkpoint(dir / "d.cdb").head.has_value());
}

TEST_CASE("checkpoint and config errors map to exit codes") {
    TempDir dir("errors");
    spit(dir / "junk.cdb", "not a checkpoint");
    REQUIRE(run({"synth", "--class", "block", "--seed", "2", "--out", dir / "s.vox", "--obs-out", dir / "s.obs"}).code ==
            kExitOk);
    const auto r = run({"classify", "--model", dir / "junk.cdb", "--obs", dir / "s.obs", "--seed", "1"});
    CHECK(r.code == kExitData);
    CHECK(!r.err.empty());

    spit(dir / "noseed.cfg", "samples_per_class = 4\n");
    CHECK(run({"train", "--config", dir / "noseed.cfg", "--out", dir / "x.cdb"}).code == kExitUsage);
    spit(dir / "typo.cfg", "seed = 1\nlearning_rat = 0.1\n");
    CHECK(run({"train", "--config", dir / "typo.cfg", "--out", dir / "x.cdb"}).code == kExitUsage);
    CHECK(!fs::exists(dir / "x.cdb"));
}

TEST_CASE("eval writes a reproducible report") {
    TempDir dir("eval");
    spit(dir / "run.cfg", kTinyConfig);
    for (const char* name : {"a", "b"})
        REQUIRE(run({"eval", "--config", dir / "run.cfg", "--out", dir / (std::string(name) + ".json"), "--csv",
                     dir / (std::string(name) + ".csv"), "--curves-dir", dir / "curves"})
                    .code == kExitOk);
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    const auto j = nlohmann::json::parse(slurp(dir / "a.json"));
    CHECK(j["classification"].contains("mean_category_accuracy"));
    CHECK(fs::exists(dir / "curves/pr_block.csv"));
}
