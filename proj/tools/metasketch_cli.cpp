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

// Command-line front end. Every subcommand runs its invariant self-checks and
// exits with 0 only when all of them pass (1 on a failed check, 2 on an error).

#include <metasketch/harness.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace metasketch;

namespace
{

struct Common
{
    std::uint64_t seed = 1;
    std::string out_dir;
    std::size_t threads = 1;

    fs::path out(const std::string &p) const
    {
        if (p.empty() || out_dir.empty() || fs::path(p).is_absolute())
            return p;
        return fs::path(out_dir) / p;
    }
};

void add_common(CLI::App *sub, Common &c)
{
    sub->add_option("--seed", c.seed, "64-bit master seed");
    sub->add_option("--out-dir", c.out_dir, "directory that relative output paths resolve against");
    sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

int finish(const Report &report)
{
    for (const auto &c : report.checks)
        std::cout << "check " << (c.passed ? "ok   " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail)
                  << '\n';
    return report.all_passed() ? 0 : 1;
}

io::SceneSpec load_scene(const std::string &path)
{
    return path.empty() ? io::scene_spec_from_json(io::json::object()) : io::load_scene_spec(path);
}

void check_manifest(Report &r, const fs::path &csv)
{
    const std::string problem = io::validate_against_manifest(csv);
    r.add("manifest " + csv.filename().string(), problem.empty(), problem);
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"metasketch: metasurface-assisted compressive RF sensing simulator"};
    app.require_subcommand(1);
    Common common;

    // optimize-config
    auto *opt = app.add_subcommand("optimize-config", "minimize the AMC of a K-row configuration matrix");
    std::string opt_scene, opt_config = "config.csv", opt_trace = "trace.csv", opt_initial;
    std::size_t opt_k = 10;
    OptimizerParams opt_params;
    opt->add_option("--scene-spec", opt_scene, "scene-spec JSON (defaults when omitted)");
    opt->add_option("--k", opt_k, "number of configurations K")->check(CLI::PositiveNumber);
    opt->add_option("--initial", opt_initial, "initial configuration CSV (random when omitted)");
    opt->add_option("--out-config", opt_config, "optimized configuration CSV");
    opt->add_option("--out-trace", opt_trace, "trace CSV iter,row,mu,accepted");
    opt->add_option("--max-iterations", opt_params.max_outer_iterations, "outer iteration cap");
    opt->add_option("--population", opt_params.population_size, "GA population size");
    opt->add_option("--generations", opt_params.ga_generations, "GA generations per row");
    opt->add_option("--mutation-rate", opt_params.ga_mutation_rate, "GA per-gene mutation probability");
    add_common(opt, common);

    // calibrate
    auto *cal = app.add_subcommand("calibrate", "simulate the unit-patch sweep that measures H* and y^B");
    std::string cal_scene, cal_config, cal_matrix = "matrix.csv", cal_background = "background.csv";
    CalibrationOptions cal_opt;
    cal->add_option("--scene-spec", cal_scene, "scene-spec JSON (defaults when omitted)");
    cal->add_option("--config", cal_config, "configuration CSV")->required();
    cal->add_option("--noise-sigma", cal_opt.noise_sigma, "per-component measurement noise std");
    cal->add_option("--clutter", cal_opt.clutter_amplitude, "static background amplitude");
    cal->add_option("--out-matrix", cal_matrix, "H* output (.csv or .bin)");
    cal->add_option("--out-background", cal_background, "y^B output CSV");
    add_common(cal, common);

    // synthesize
    auto *syn = app.add_subcommand("synthesize", "generate labeled scenes, measurements and recovered point clouds");
    std::string syn_scene, syn_config, syn_data = "dataset";
    std::size_t syn_scenes = 64;
    CalibrationOptions syn_cal;
    double syn_epsilon = -1.0;
    syn->add_option("--scene-spec", syn_scene, "scene-spec JSON (defaults when omitted)");
    syn->add_option("--config", syn_config, "configuration CSV")->required();
    syn->add_option("--scenes", syn_scenes, "number of scenes")->check(CLI::PositiveNumber);
    syn->add_option("--noise-sigma", syn_cal.noise_sigma, "per-component measurement noise std");
    syn->add_option("--clutter", syn_cal.clutter_amplitude, "static background amplitude");
    syn->add_option("--epsilon", syn_epsilon, "recovery residual bound (default sigma sqrt(2K))");
    syn->add_option("--data", syn_data, "output dataset directory");
    add_common(syn, common);

    // recover
    auto *rec = app.add_subcommand("recover", "l1 recovery of the reflection coefficients of one measurement");
    std::string rec_matrix, rec_measurement, rec_background, rec_out = "cloud.csv", rec_scene;
    double rec_epsilon = 0.0;
    rec->add_option("--matrix", rec_matrix, "H* (.csv or binary)")->required();
    rec->add_option("--measurement", rec_measurement, "y CSV re,im")->required();
    rec->add_option("--background", rec_background, "y^B CSV re,im (zero when omitted)");
    rec->add_option("--epsilon", rec_epsilon, "residual bound, 0 for equality")->check(CLI::NonNegativeNumber);
    rec->add_option("--scene-spec", rec_scene, "scene-spec JSON giving block positions (defaults when omitted)");
    rec->add_option("--out", rec_out, "point cloud CSV x,y,z,re,im");
    add_common(rec, common);

    // train-seg
    auto *trn = app.add_subcommand("train-seg", "train the segmentation network on a dataset");
    std::string trn_data, trn_model = "model.json", trn_trace;
    TrainConfig trn_cfg;
    std::string trn_optimizer = "momentum";
    trn->add_option("--data", trn_data, "dataset directory")->required();
    trn->add_option("--epochs", trn_cfg.epochs, "training epochs");
    trn->add_option("--lr", trn_cfg.learning_rate, "learning rate");
    trn->add_option("--optimizer", trn_optimizer, "momentum or adam")->check(CLI::IsMember({"momentum", "adam"}));
    trn->add_option("--out-model", trn_model, "model JSON (weights written next to it)");
    trn->add_option("--out-trace", trn_trace, "training trace CSV (default: <model>.trace.csv)");
    add_common(trn, common);

    // eval-seg
    auto *evl = app.add_subcommand("eval-seg", "evaluate a trained network on a dataset");
    std::string evl_model, evl_data, evl_out;
    evl->add_option("--model", evl_model, "model JSON")->required();
    evl->add_option("--data", evl_data, "dataset directory")->required();
    evl->add_option("--out", evl_out, "evaluation JSON (stdout only when omitted)");
    add_common(evl, common);

    // run-experiment
    auto *exp = app.add_subcommand("run-experiment", "run the experiments described by a spec JSON");
    std::string exp_spec;
    exp->add_option("spec", exp_spec, "experiment spec JSON")->required();
    add_common(exp, common);

    CLI11_PARSE(app, argc, argv);
    set_thread_count(common.threads);

    try
    {
        Report report;
        if (*opt)
        {
            const io::SceneSpec scene = load_scene(opt_scene);
            const CMatrix A = compute_A(scene.geometry);
            opt_params.rng_seed = common.seed;
            const std::size_t Ns = scene.geometry.surface.n_states();
            const OptimizationResult res =
                opt_initial.empty() ? optimize_config(A, opt_k, Ns, opt_params)
                                    : optimize_config(A, io::read_configuration_csv(opt_initial, Ns), opt_params);
            io::write_configuration_csv(common.out(opt_config), res.best);
            io::write_trace_csv(common.out(opt_trace), res);
            std::cout << "initial_mu " << io::fmt(res.initial_mu) << "\nfinal_mu " << io::fmt(res.mu) << '\n';
            report.add("trace non-increasing", res.trace.non_increasing() && res.mu <= res.initial_mu);
            report.add("final AMC matches the written configuration", amc(measurement_matrix(res.best, A)) == res.mu);
            check_manifest(report, common.out(opt_trace));
        }
        else if (*cal)
        {
            const io::SceneSpec scene = load_scene(cal_scene);
            const CMatrix A = compute_A(scene.geometry);
            const ConfigurationMatrix C = io::read_configuration_csv(cal_config, scene.geometry.surface.n_states());
            cal_opt.seed = common.seed;
            const Calibration c = calibrate(C, A, cal_opt);
            io::write_complex_matrix(common.out(cal_matrix), c.H);
            io::write_complex_vector_csv(common.out(cal_background), c.background);
            report.add("calibrated matrix finite", c.H.allFinite() && c.background.allFinite());
            if (cal_opt.noise_sigma == 0.0)
            {
                const CMatrix G = measurement_matrix(C, A);
                report.add("noiseless calibration equals D A", (c.H - G).norm() <= 1e-9 * G.norm());
            }
        }
        else if (*syn)
        {
            const io::SceneSpec scene = load_scene(syn_scene);
            const CMatrix A = compute_A(scene.geometry);
            const ConfigurationMatrix C = io::read_configuration_csv(syn_config, scene.geometry.surface.n_states());
            syn_cal.seed = derive_seed(common.seed, "synthesize/calibration");
            const CycleSystem sys = build_cycle_system(C, A, scene.geometry.target, syn_cal);
            CycleParams cp;
            cp.noise_sigma = syn_cal.noise_sigma;
            if (syn_epsilon >= 0.0)
            {
                cp.auto_epsilon = false;
                cp.recovery.epsilon = syn_epsilon;
            }
            const auto items = synthesize_dataset(sys, scene, syn_scenes, cp, derive_seed(common.seed, "synthesize"));
            const fs::path dir = common.out(syn_data);
            write_dataset(dir, items, n_labels,
                          {{"K", C.rows()}, {"noise_sigma", syn_cal.noise_sigma}, {"seed", common.seed}});
            io::write_complex_matrix_csv(dir / "matrix.csv", sys.calibration.H);
            io::write_complex_vector_csv(dir / "background.csv", sys.calibration.background);
            io::write_configuration_csv(dir / "config.csv", C);
            {
                auto out = io::open_out(dir / "scene_spec.json");
                out << io::scene_spec_to_json(scene).dump(2) << '\n';
            }
            report.merge(validate_csv_tree(dir));
        }
        else if (*rec)
        {
            const io::SceneSpec scene = load_scene(rec_scene);
            const CMatrix H = io::read_complex_matrix(rec_matrix);
            const CVector y = io::read_complex_vector_csv(rec_measurement);
            const CVector yB = rec_background.empty() ? CVector::Zero(y.size()) : io::read_complex_vector_csv(rec_background);
            RecoveryParams rp;
            rp.epsilon = rec_epsilon;
            const RecoveryResult r = recover_eta(H, y, yB, rp);
            io::write_pointcloud_csv(common.out(rec_out), assemble_pointcloud(r.eta, scene.geometry.target));
            std::cout << "residual " << io::fmt(r.residual) << "\nl1 " << io::fmt(l1_norm(r.eta)) << '\n';
            const double bound = rec_epsilon > 0.0 ? rec_epsilon * 1.01 : rp.convergence_tol * (y - yB).norm();
            report.add("residual within bound", r.residual <= bound,
                       "residual " + io::fmt(r.residual) + ", bound " + io::fmt(bound));
            check_manifest(report, common.out(rec_out));
        }
        else if (*trn)
        {
            const Dataset data = read_dataset(trn_data);
            SegNetArchitecture arch;
            arch.global_dim = arch.n_classes = static_cast<std::size_t>(data.n_obj);
            trn_cfg.optimizer = trn_optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::momentum;
            trn_cfg.rng_seed = derive_seed(common.seed, "train-seg/order");
            const SegNetParams init = init_segnet(arch, derive_seed(common.seed, "train-seg/init"));
            const TrainResult tr = train(init, data.clouds, trn_cfg);
            const fs::path model = common.out(trn_model);
            io::save_segnet(model, tr.params);
            fs::path trace = trn_trace.empty() ? fs::path(model).replace_extension(".trace.csv") : common.out(trn_trace);
            io::write_train_trace_csv(trace, tr.trace);
            if (!tr.trace.empty())
                std::cout << "final_loss " << io::fmt(tr.trace.back().loss) << "\nfinal_error "
                          << io::fmt(tr.trace.back().avg_error_rate) << '\n';
            bool finite = true;
            for (const auto &e : tr.trace)
                finite = finite && std::isfinite(e.loss) && e.loss >= 0.0;
            report.add("training losses finite and nonnegative", finite);
            report.add("model round-trips", io::load_segnet(model).to_vector() == tr.params.to_vector());
            check_manifest(report, trace);
        }
        else if (*evl)
        {
            const Dataset data = read_dataset(evl_data);
            const SegNetParams params = io::load_segnet(evl_model);
            require(static_cast<int>(params.n_classes()) == data.n_obj, ErrorKind::dimension_mismatch,
                    "model classes do not match the dataset");
            const EpochRecord r = evaluate(params, data.clouds, data.n_obj);
            const io::json j = {{"scenes", data.clouds.size()}, {"loss", r.loss}, {"avg_error_rate", r.avg_error_rate}};
            std::cout << j.dump(2) << '\n';
            if (!evl_out.empty())
            {
                auto out = io::open_out(common.out(evl_out));
                out << j.dump(2) << '\n';
            }
            report.add("loss finite and nonnegative", std::isfinite(r.loss) && r.loss >= 0.0);
            report.add("error rate in [0, 1]", r.avg_error_rate >= 0.0 && r.avg_error_rate <= 1.0);
        }
        else if (*exp)
        {
            ExperimentSpec spec = load_experiment_spec(exp_spec);
            if (!common.out_dir.empty())
                spec.output_dir = common.out_dir;
            if (exp->count("--seed"))
                spec.master_seed = common.seed;
            const ExperimentResult res = run_experiment(spec);
            report.merge(res.report);
        }
        return finish(report);
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
