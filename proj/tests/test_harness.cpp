// SPDX-License-Identifier: Apache-2.0
//
// metasketch-sim: metasurface-assisted compressive RF sensing simulator
// Copyright (C) 2026 The metasketch-sim authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <catch_amalgamated.hpp>

#include <metasketch/harness.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace metasketch;
namespace fs = std::filesystem;

namespace
{

struct TempDir
{
    fs::path path;

    explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / ("metasketch_test_harness_" + name))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// 3 x 3 grid of blocks 1.2 m in front of the surface.
TargetSpace pilot_target()
{
    return build_target_space(Vec3(1.0, -0.45, -0.45), Vec3(0.4, 0.3, 0.3), GridIndex{1, 3, 3});
}

io::json pilot_scene_json()
{
    return io::json::parse(R"({
        "target": {"corner": [1.0, -0.45, -0.45], "block_size": [0.4, 0.3, 0.3], "counts": [1, 3, 3]},
        "shapes": [{"name": "patch", "label": 2, "box": [1, 1, 1], "magnitude": [0.5, 1.0]}],
        "placement": {"inclusion_probability": 0.5}
    })");
}

OptimizerParams quick_optimizer()
{
    OptimizerParams p;
    p.population_size = 8;
    p.ga_generations = 5;
    p.max_outer_iterations = 30;
    return p;
}

ExperimentSpec tiny_spec(const fs::path &out)
{
    io::json j = {{"name", "tiny"},
                  {"scene_spec", pilot_scene_json()},
                  {"k_values", {1, 5}},
                  {"scene_count", 6},
                  {"master_seed", 5},
                  {"optimizer", {{"population_size", 6}, {"ga_generations", 4}, {"max_outer_iterations", 20}}},
                  {"train", {{"epochs", 5}}},
                  {"network", {{"local_widths", {8}}, {"head_widths", {8}}}},
                  {"amc_vs_iterations", {{"k_values", {3, 6}}, {"seeds", 2}, {"random_baselines", 4}}},
                  {"recovery_quality", {{"k", 5}, {"sparsities", {0, 1, 2}}, {"seeds", 2}}}};
    ExperimentSpec s = experiment_spec_from_json(j);
    s.output_dir = out;
    return s;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// relative path -> bytes of every regular file under dir
std::map<std::string, std::string> snapshot(const fs::path &dir)
{
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file())
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

int run_cli(const std::string &args)
{
    const std::string cmd = std::string("\"") + METASKETCH_CLI + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("empty noiseless scene recovers zero and is labeled empty", "[harness]")
{
    const TargetSpace t = pilot_target();
    const CMatrix A = compute_A(default_surface(), Layout{}, t);
    Rng rng(1);
    const CycleSystem sys = build_cycle_system(random_configuration(5, 16, 4, rng), A, t, CalibrationOptions{});

    // a model that maps zero-coefficient points to the empty label
    SegNetArchitecture arch;
    arch.local_widths = {8};
    arch.head_widths = {8};
    std::vector<LabeledCloud> zeros{{assemble_pointcloud(CVector::Zero(9), t), std::vector<int>(9, 5)}};
    TrainConfig tc;
    tc.epochs = 100;
    const SegNetParams model = train(init_segnet(arch, 2), zeros, tc).params;

    const CycleResult r = run_cycle(sys, LabeledScene{}, &model, CycleParams{});
    CHECK(r.eta == CVector::Zero(9));
    CHECK(r.labels == std::vector<int>(9, 5));
    CHECK(r.metrics.avg_error_rate == 0.0);
    CHECK(r.metrics.relative_error == 0.0);
}

TEST_CASE("1-patch noiseless cycles recover the true support", "[harness]")
{
    const TargetSpace t = pilot_target();
    const CMatrix A = compute_A(default_surface(), Layout{}, t);

    SECTION("overdetermined K = 12")
    {
        const OptimizationResult opt = optimize_config(A, 12, 4, quick_optimizer());
        const CycleSystem sys = build_cycle_system(opt.best, A, t, CalibrationOptions{});
        for (std::size_t m = 0; m < 9; ++m)
        {
            LabeledScene scene;
            scene.entries.push_back({m, cplx(0.8, 0.0), 2});
            const CycleResult r = run_cycle(sys, scene, nullptr, CycleParams{});
            CHECK(r.metrics.relative_error < 1e-4);
        }
    }
    SECTION("K = 5 whenever the dual certificate holds")
    {
        const OptimizationResult opt = optimize_config(A, 5, 4, quick_optimizer());
        const CycleSystem sys = build_cycle_system(opt.best, A, t, CalibrationOptions{});
        const CMatrix &H = sys.calibration.H;
        int certified = 0;
        for (std::size_t m = 0; m < 9; ++m)
        {
            // unique l1 minimizer for e_m iff |<h_j, h_m>| < |h_m|^2 for j != m
            bool unique = true;
            const auto mi = static_cast<Eigen::Index>(m);
            for (Eigen::Index j = 0; j < 9; ++j)
                if (j != mi && std::abs(H.col(j).dot(H.col(mi))) >= H.col(mi).squaredNorm() * (1.0 - 1e-9))
                    unique = false;
            if (!unique)
                continue;
            ++certified;
            LabeledScene scene;
            scene.entries.push_back({m, cplx(0.0, -0.6), 2});
            const CycleResult r = run_cycle(sys, scene, nullptr, CycleParams{});
            for (Eigen::Index j = 0; j < 9; ++j)
                CHECK((j == mi) == (std::abs(r.eta[j]) > 1e-6));
            CHECK(r.metrics.relative_error < 1e-4);
        }
        CHECK(certified >= 1);
    }
}

TEST_CASE("cycles are deterministic and errors carry the seed", "[harness]")
{
    const TargetSpace t = pilot_target();
    const CMatrix A = compute_A(default_surface(), Layout{}, t);
    Rng rng(3);
    CalibrationOptions co;
    co.noise_sigma = 1e-7;
    co.clutter_amplitude = 1e-5;
    co.seed = 4;
    const CycleSystem sys = build_cycle_system(random_configuration(5, 16, 4, rng), A, t, co);
    const LabeledScene scene = generate_scene(default_shape_library(), PlacementRules{}, t, 8);
    const SegNetParams model = init_segnet(SegNetArchitecture{}, 9);
    CycleParams cp;
    cp.noise_sigma = 1e-7;
    cp.seed = 77;
    CHECK(run_cycle(sys, scene, &model, cp) == run_cycle(sys, scene, &model, cp));
    cp.seed = 78;
    CHECK_FALSE(run_cycle(sys, scene, &model, cp).y == run_cycle(sys, scene, &model, CycleParams{}).y);

    LabeledScene bad;
    bad.entries.push_back({42, cplx(1.0, 0.0), 1});
    try
    {
        run_cycle(sys, bad, nullptr, cp);
        FAIL("expected an error");
    }
    catch (const Error &e)
    {
        CHECK(std::string(e.what()).find("seed 78") != std::string::npos);
    }
}

TEST_CASE("datasets round-trip through their directory layout", "[harness]")
{
    TempDir dir("dataset");
    const TargetSpace t = pilot_target();
    const CMatrix A = compute_A(default_surface(), Layout{}, t);
    Rng rng(5);
    const CycleSystem sys = build_cycle_system(random_configuration(5, 16, 4, rng), A, t, CalibrationOptions{});
    const io::SceneSpec spec = io::scene_spec_from_json(pilot_scene_json());
    const auto items = synthesize_dataset(sys, spec, 4, CycleParams{}, 11);
    write_dataset(dir.path, items, n_labels);
    const Dataset d = read_dataset(dir.path);
    REQUIRE(d.clouds.size() == 4);
    for (std::size_t i = 0; i < 4; ++i)
    {
        CHECK(d.clouds[i].cloud.features == items[i].cloud.features);
        CHECK(d.clouds[i].labels == items[i].labels);
        CHECK(io::read_scene_csv(dir.path / indexed_name("scene", i)) == items[i].scene);
    }
    CHECK(validate_csv_tree(dir.path).all_passed());
    CHECK(indexed_name("cloud", 7) == "cloud_0007.csv");
    set_thread_count(3);
    const auto again = synthesize_dataset(sys, spec, 4, CycleParams{}, 11);
    set_thread_count(1);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(again[i].cloud.features == items[i].cloud.features);
}

TEST_CASE("experiment specs parse nested sections and validate", "[harness]")
{
    const ExperimentSpec s = tiny_spec("unused");
    CHECK(s.k_values == std::vector<std::size_t>{1, 5});
    CHECK(s.scene.geometry.target.size() == 9);
    CHECK(s.optimizer.population_size == 6);
    CHECK(s.train.epochs == 5);
    CHECK(s.network.local_widths == std::vector<std::size_t>{8});
    CHECK(s.amc_k_values == std::vector<std::size_t>{3, 6});
    CHECK(s.auto_epsilon);
    CHECK(segmentation_conditions(s).size() == 3);

    const ExperimentSpec e = experiment_spec_from_json(io::json::parse(R"({"recovery": {"epsilon": 0.5}})"));
    CHECK_FALSE(e.auto_epsilon);
    CHECK(e.recovery.epsilon == 0.5);

    CHECK_THROWS_AS(experiment_spec_from_json(io::json::parse(R"({"k_values": [0]})")), Error);
    CHECK_THROWS_AS(experiment_spec_from_json(io::json::parse(R"({"scene_count": 0})")), Error);
    CHECK_THROWS_AS(experiment_spec_from_json(io::json::parse(R"({"train": {"optimizer": "sgd"}})")), Error);
    CHECK_THROWS_AS(experiment_spec_from_json(io::json::parse(R"({"k_values": "five"})")), Error);

    CHECK(experiment_seed(s, "a") != experiment_seed(s, "b"));
}

TEST_CASE("a tiny experiment is deterministic and self-consistent", "[harness]")
{
    TempDir a("exp_a"), b("exp_b");
    const ExperimentResult ra = run_experiment(tiny_spec(a.path));
    set_thread_count(4);
    const ExperimentResult rb = run_experiment(tiny_spec(b.path));
    set_thread_count(1);
    CHECK(ra.report.all_passed());
    CHECK(snapshot(a.path) == snapshot(b.path));

    REQUIRE(ra.amc.has_value());
    for (const auto &run : ra.amc->runs)
        CHECK(run.result.trace.non_increasing());
    REQUIRE(ra.recovery.has_value());
    CHECK(ra.recovery->mean_error("optimized", 0) == 0.0);
    CHECK(ra.recovery->mean_error("random", 0) == 0.0);
    REQUIRE(ra.segmentation.has_value());
    CHECK(ra.segmentation->runs.size() == 3);
    for (const char *f : {"experiment.json", "amc_vs_iterations/summary.csv", "amc_vs_iterations/K3/seed0/trace.csv",
                          "recovery_quality/summary.csv", "segmentation/summary.csv",
                          "segmentation/optimized_K5/seed0/trace.csv", "segmentation/fixed_K1/seed0/model.json"})
        CHECK(fs::exists(a.path / f));

    TempDir c("exp_c");
    ExperimentSpec other = tiny_spec(c.path);
    other.master_seed = 6;
    run_experiment(other);
    CHECK_FALSE(slurp(c.path / "amc_vs_iterations/summary.csv") == slurp(a.path / "amc_vs_iterations/summary.csv"));
}

TEST_CASE("CLI subcommands run and rerun byte-identically", "[harness][cli]")
{
    TempDir dir("cli");
    const fs::path scene = dir.path / "scene.json";
    {
        std::ofstream out(scene);
        out << pilot_scene_json().dump(2);
    }
    const std::string s = " --scene-spec \"" + scene.string() + "\"";
    for (const char *run : {"r1", "r2"})
    {
        const fs::path out = dir.path / run;
        const std::string o = " --seed 3 --out-dir \"" + out.string() + "\"";
        REQUIRE(run_cli("optimize-config" + s + o + " --k 5 --max-iterations 10 --population 6 --generations 3 "
                        "--out-config config.csv --out-trace trace.csv") == 0);
        const std::string cfg = " --config \"" + (out / "config.csv").string() + "\"";
        REQUIRE(run_cli("calibrate" + s + o + cfg + " --out-matrix h.bin --out-background bg.csv") == 0);
        REQUIRE(run_cli("synthesize" + s + o + cfg + " --scenes 4 --data data") == 0);
        REQUIRE(run_cli("recover" + s + o + " --matrix \"" + (out / "h.bin").string() + "\" --measurement \"" +
                        (out / "data/measurement_0001.csv").string() + "\" --background \"" + (out / "bg.csv").string() +
                        "\" --out cloud.csv") == 0);
        const std::string data = " --data \"" + (out / "data").string() + "\"";
        REQUIRE(run_cli("train-seg" + o + data + " --epochs 3 --out-model model.json") == 0);
        REQUIRE(run_cli("eval-seg" + o + data + " --model \"" + (out / "model.json").string() + "\" --out eval.json") == 0);
    }
    const auto first = snapshot(dir.path / "r1");
    CHECK(first.size() > 20);
    CHECK(first == snapshot(dir.path / "r2"));

    CHECK(run_cli("recover --matrix missing.bin --measurement missing.csv") == 2);
    CHECK(run_cli("no-such-command") != 0);
}
