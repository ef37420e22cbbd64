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

#pragma once

#include "channel.hpp"
#include "core.hpp"
#include "io.hpp"
#include "optimizer.hpp"
#include "parallel.hpp"
#include "recovery.hpp"
#include "rng.hpp"
#include "scene.hpp"
#include "segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace metasketch
{

// ---------------------------------------------------------------------------
// Self-check report
// ---------------------------------------------------------------------------

struct Check
{
    std::string name;
    bool passed = false;
    std::string detail;
};

struct Report
{
    std::vector<Check> checks;

    void add(std::string name, bool passed, std::string detail = {})
    {
        checks.push_back({std::move(name), passed, std::move(detail)});
    }

    bool all_passed() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const Check &c) { return c.passed; });
    }

    void merge(const Report &other) { checks.insert(checks.end(), other.checks.begin(), other.checks.end()); }
};

// Validates every CSV under dir against its manifest.
inline Report validate_csv_tree(const std::filesystem::path &dir)
{
    Report r;
    std::vector<std::filesystem::path> files;
    for (const auto &e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto &f : files)
    {
        if (!std::filesystem::exists(io::manifest_path(f)))
            continue;  // configuration matrices carry no header and no manifest
        const std::string problem = io::validate_against_manifest(f);
        r.add("manifest " + std::filesystem::relative(f, dir).string(), problem.empty(), problem);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Cycle
// ---------------------------------------------------------------------------

// Everything fixed before a cycle: the configuration sequence, the physical
// channel used to synthesize measurements and its calibrated estimate used
// for recovery.
struct CycleSystem
{
    ConfigurationMatrix C;
    CMatrix H_true;           // g(C)
    CVector background_true;  // static clutter seen by every measurement
    Calibration calibration;  // H*, y^B
    TargetSpace target;
};

inline CycleSystem build_cycle_system(const ConfigurationMatrix &C, const CMatrix &A, const TargetSpace &target,
                                      const CalibrationOptions &opt)
{
    require(static_cast<std::size_t>(A.cols()) == target.size(), ErrorKind::dimension_mismatch,
            "A must have one column per target block");
    CycleSystem sys;
    sys.C = C;
    sys.H_true = measurement_matrix(C, A);
    sys.background_true = static_background(C.rows(), opt.clutter_amplitude, derive_seed(opt.seed, "calibrate/clutter"));
    sys.calibration = calibrate(C, A, opt);
    sys.target = target;
    return sys;
}

struct CycleParams
{
    double noise_sigma = 0.0;
    RecoveryParams recovery;
    bool auto_epsilon = true;  // epsilon = default_epsilon(noise_sigma, K), overriding recovery.epsilon
    std::uint64_t seed = 0;
};

struct CycleMetrics
{
    double residual = 0.0;
    double relative_error = 0.0;  // |eta_hat - eta| / |eta|, or |eta_hat| for an empty scene
    double lambda = 0.0;
    std::size_t recovery_iterations = 0;
    double loss = 0.0;            // only when a model is supplied
    double avg_error_rate = 0.0;  // only when a model is supplied

    bool operator==(const CycleMetrics &) const = default;
};

struct CycleResult
{
    CVector y;
    CVector eta;
    PointCloud cloud;
    std::vector<int> labels;  // empty without a model
    CycleMetrics metrics;

    bool operator==(const CycleResult &o) const
    {
        return y == o.y && eta == o.eta && cloud.features == o.cloud.features && labels == o.labels &&
               metrics == o.metrics;
    }
};

inline double relative_error(const CVector &estimate, const CVector &truth)
{
    const double t = truth.norm();
    return t > 0.0 ? (estimate - truth).norm() / t : estimate.norm();
}

// Data collection (synthesize y) followed by signal processing (recover,
// assemble, segment). Errors are rethrown with the cycle seed attached.
inline CycleResult run_cycle(const CycleSystem &sys, const LabeledScene &scene, const SegNetParams *segnet,
                             const CycleParams &params)
{
    try
    {
        const std::size_t M = sys.target.size();
        scene.validate(M);
        const CVector eta = scene.dense_eta(M);
        CycleResult r;
        r.y = simulate_received(eta, sys.H_true, sys.background_true, params.noise_sigma, params.seed);

        RecoveryParams rp = params.recovery;
        if (params.auto_epsilon)
            rp.epsilon = default_epsilon(params.noise_sigma, sys.C.rows());
        const RecoveryResult rec = recover_eta(sys.calibration.H, r.y, sys.calibration.background, rp);
        r.eta = rec.eta;
        r.cloud = assemble_pointcloud(rec.eta, sys.target);
        r.metrics.residual = rec.residual;
        r.metrics.lambda = rec.lambda;
        r.metrics.recovery_iterations = rec.iterations;
        r.metrics.relative_error = relative_error(rec.eta, eta);

        if (segnet)
        {
            const LabeledPrediction pred = forward(*segnet, r.cloud);
            const std::vector<int> truth = ground_truth_labels(scene, sys.target);
            r.labels = pred.labels;
            r.metrics.loss = loss(pred, truth);
            r.metrics.avg_error_rate = avg_error_rate(pred.labels, truth, static_cast<int>(segnet->n_classes()));
        }
        return r;
    }
    catch (const Error &e)
    {
        throw Error(e.kind(), "cycle with seed " + std::to_string(params.seed) + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Datasets of recovered point clouds
// ---------------------------------------------------------------------------

// Directory layout: dataset.json plus, per scene i, scene_<i>.csv (ground
// truth), measurement_<i>.csv (y), cloud_<i>.csv and labels_<i>.csv.
struct DatasetItem
{
    LabeledScene scene;
    CVector y;
    PointCloud cloud;
    std::vector<int> labels;
};

inline std::string indexed_name(const std::string &stem, std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%04zu.csv", i);
    return stem + buf;
}

inline void write_dataset(const std::filesystem::path &dir, const std::vector<DatasetItem> &items, int n_obj,
                          const io::json &metadata = io::json::object())
{
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < items.size(); ++i)
    {
        io::write_scene_csv(dir / indexed_name("scene", i), items[i].scene);
        io::write_complex_vector_csv(dir / indexed_name("measurement", i), items[i].y);
        io::write_pointcloud_csv(dir / indexed_name("cloud", i), items[i].cloud);
        io::write_labels_csv(dir / indexed_name("labels", i), items[i].labels);
    }
    io::json j = {{"format", "metasketch-dataset"}, {"version", 1}, {"scenes", items.size()}, {"n_obj", n_obj},
                  {"metadata", metadata}};
    auto out = io::open_out(dir / "dataset.json");
    out << j.dump(2) << '\n';
}

struct Dataset
{
    std::vector<LabeledCloud> clouds;
    int n_obj = n_labels;
};

inline Dataset read_dataset(const std::filesystem::path &dir)
{
    const io::json j = io::read_json(dir / "dataset.json");
    require(j.value("format", std::string()) == "metasketch-dataset", ErrorKind::io, dir.string() + " is not a dataset");
    require(j.value("version", 0) == 1, ErrorKind::io, dir.string() + ": unsupported dataset version");
    Dataset d;
    d.n_obj = j.at("n_obj").get<int>();
    const auto n = j.at("scenes").get<std::size_t>();
    for (std::size_t i = 0; i < n; ++i)
    {
        LabeledCloud c;
        c.cloud = io::read_pointcloud_csv(dir / indexed_name("cloud", i));
        c.labels = io::read_labels_csv(dir / indexed_name("labels", i));
        require(c.labels.size() == c.cloud.size(), ErrorKind::io, "labels and cloud sizes differ for scene " + std::to_string(i));
        d.clouds.push_back(std::move(c));
    }
    return d;
}

// Runs the signal-processing phase on n scenes drawn from the spec, scene i
// from seed derive_seed(seed, "scene", i) and its noise from
// derive_seed(seed, "measurement", i).
inline std::vector<DatasetItem> synthesize_dataset(const CycleSystem &sys, const io::SceneSpec &spec, std::size_t n,
                                                   const CycleParams &params, std::uint64_t seed)
{
    std::vector<DatasetItem> items(n);
    parallel_for(n, [&](std::size_t i) {
        DatasetItem &it = items[i];
        it.scene = generate_scene(spec.shapes, spec.placement, sys.target, derive_seed(seed, "scene", i));
        CycleParams cp = params;
        cp.seed = derive_seed(seed, "measurement", i);
        const CycleResult r = run_cycle(sys, it.scene, nullptr, cp);
        it.y = r.y;
        it.cloud = r.cloud;
        it.labels = ground_truth_labels(it.scene, sys.target);
    });
    return items;
}

inline std::vector<LabeledCloud> to_labeled_clouds(const std::vector<DatasetItem> &items)
{
    std::vector<LabeledCloud> out;
    out.reserve(items.size());
    for (const auto &it : items)
        out.push_back({it.cloud, it.labels});
    return out;
}

// ---------------------------------------------------------------------------
// Experiment spec
// ---------------------------------------------------------------------------

struct ExperimentSpec
{
    std::string name = "experiment";
    std::filesystem::path scene_spec_path;  // empty: built-in defaults
    io::SceneSpec scene;
    std::vector<std::string> experiments{"amc_vs_iterations", "recovery_quality", "segmentation"};
    std::vector<std::size_t> k_values{1, 5, 10};
    double noise_sigma = 0.0;
    double clutter_amplitude = 0.0;
    OptimizerParams optimizer;
    RecoveryParams recovery;
    bool auto_epsilon = true;
    TrainConfig train;
    SegNetArchitecture network;
    std::size_t scene_count = 64;
    std::filesystem::path output_dir = "out";
    std::uint64_t master_seed = 1;

    // amc_vs_iterations
    std::vector<std::size_t> amc_k_values{5, 20};
    std::size_t amc_seeds = 5;
    std::size_t random_baselines = 20;

    // recovery_quality
    std::size_t recovery_k = 5;
    std::vector<std::size_t> sparsities{0, 1, 2, 3, 4, 5, 6};
    std::size_t recovery_seeds = 10;
    double recovery_noise_sigma = 0.0;
    double magnitude_min = 0.5;
    double magnitude_max = 1.0;

    // segmentation
    std::size_t segmentation_seeds = 1;
    bool include_random = true;  // random-C condition next to each optimized K > 1
    double error_threshold = 0.05;

    void validate() const
    {
        require(!k_values.empty() && !amc_k_values.empty(), ErrorKind::invalid_argument, "K value lists must be non-empty");
        for (auto k : k_values)
            require(k >= 1, ErrorKind::invalid_argument, "K values must be >= 1");
        for (auto k : amc_k_values)
            require(k >= 2, ErrorKind::invalid_argument, "AMC experiment K values must be >= 2");
        require(recovery_k >= 1, ErrorKind::invalid_argument, "recovery K must be >= 1");
        require(scene_count >= 1, ErrorKind::invalid_argument, "scene count must be >= 1");
        require(amc_seeds >= 1 && recovery_seeds >= 1 && segmentation_seeds >= 1, ErrorKind::invalid_argument,
                "seed counts must be >= 1");
        require(noise_sigma >= 0.0 && recovery_noise_sigma >= 0.0 && clutter_amplitude >= 0.0,
                ErrorKind::invalid_argument, "noise levels must be >= 0");
        require(magnitude_min > 0.0 && magnitude_max >= magnitude_min, ErrorKind::invalid_argument,
                "recovery magnitudes must satisfy 0 < min <= max");
        for (auto s : sparsities)
            require(s <= scene.geometry.target.size(), ErrorKind::invalid_argument, "sparsity exceeds the number of blocks");
        for (const auto &e : experiments)
            require(e == "amc_vs_iterations" || e == "recovery_quality" || e == "segmentation", ErrorKind::invalid_argument,
                    "unknown experiment '" + e + "'");
        optimizer.validate();
        recovery.validate();
        train.validate();
    }

    bool runs(const std::string &experiment) const
    {
        return std::find(experiments.begin(), experiments.end(), experiment) != experiments.end();
    }
};

namespace detail
{

template <class T> void get_if(const io::json &j, const char *key, T &out)
{
    if (j.contains(key) && !j[key].is_null())
        out = j[key].get<T>();
}

} // namespace detail

// Relative paths in the document resolve against base_dir.
inline ExperimentSpec experiment_spec_from_json(const io::json &j, const std::filesystem::path &base_dir = {})
{
    using detail::get_if;
    ExperimentSpec s;
    try
    {
        get_if(j, "name", s.name);
        if (j.contains("scene_spec"))
        {
            if (j["scene_spec"].is_string())
            {
                s.scene_spec_path = base_dir / j["scene_spec"].get<std::string>();
                s.scene = io::load_scene_spec(s.scene_spec_path);
            }
            else
                s.scene = io::scene_spec_from_json(j["scene_spec"]);
        }
        else
            s.scene = io::scene_spec_from_json(io::json::object());
        get_if(j, "experiments", s.experiments);
        get_if(j, "k_values", s.k_values);
        get_if(j, "noise_sigma", s.noise_sigma);
        get_if(j, "clutter_amplitude", s.clutter_amplitude);
        get_if(j, "scene_count", s.scene_count);
        if (j.contains("output_dir"))
            s.output_dir = base_dir / j["output_dir"].get<std::string>();
        get_if(j, "master_seed", s.master_seed);

        if (j.contains("optimizer"))
        {
            const auto &o = j["optimizer"];
            get_if(o, "population_size", s.optimizer.population_size);
            get_if(o, "ga_generations", s.optimizer.ga_generations);
            get_if(o, "ga_mutation_rate", s.optimizer.ga_mutation_rate);
            get_if(o, "pattern_search_initial_step", s.optimizer.pattern_search_initial_step);
            get_if(o, "pattern_search_min_step", s.optimizer.pattern_search_min_step);
            get_if(o, "pattern_search_max_sweeps", s.optimizer.pattern_search_max_sweeps);
            get_if(o, "max_outer_iterations", s.optimizer.max_outer_iterations);
        }
        if (j.contains("recovery"))
        {
            const auto &r = j["recovery"];
            if (r.contains("epsilon") && !r["epsilon"].is_null())
            {
                s.recovery.epsilon = r["epsilon"].get<double>();
                s.auto_epsilon = false;
            }
            get_if(r, "max_iterations", s.recovery.max_iterations);
            get_if(r, "convergence_tol", s.recovery.convergence_tol);
            get_if(r, "lambda_bisection_tol", s.recovery.lambda_bisection_tol);
        }
        if (j.contains("train"))
        {
            const auto &t = j["train"];
            get_if(t, "epochs", s.train.epochs);
            get_if(t, "learning_rate", s.train.learning_rate);
            get_if(t, "beta1", s.train.beta1);
            get_if(t, "beta2", s.train.beta2);
            if (t.contains("optimizer"))
            {
                const auto k = t["optimizer"].get<std::string>();
                require(k == "momentum" || k == "adam", ErrorKind::invalid_argument, "train.optimizer must be momentum or adam");
                s.train.optimizer = k == "adam" ? OptimizerKind::adam : OptimizerKind::momentum;
            }
        }
        if (j.contains("network"))
        {
            const auto &n = j["network"];
            get_if(n, "local_widths", s.network.local_widths);
            get_if(n, "head_widths", s.network.head_widths);
            if (n.contains("activation"))
                s.network.activation = activation_from_string(n["activation"].get<std::string>());
        }
        if (j.contains("amc_vs_iterations"))
        {
            const auto &a = j["amc_vs_iterations"];
            get_if(a, "k_values", s.amc_k_values);
            get_if(a, "seeds", s.amc_seeds);
            get_if(a, "random_baselines", s.random_baselines);
        }
        if (j.contains("recovery_quality"))
        {
            const auto &r = j["recovery_quality"];
            get_if(r, "k", s.recovery_k);
            get_if(r, "sparsities", s.sparsities);
            get_if(r, "seeds", s.recovery_seeds);
            get_if(r, "noise_sigma", s.recovery_noise_sigma);
            if (r.contains("magnitude"))
            {
                const auto m = r["magnitude"].get<std::vector<double>>();
                require(m.size() == 2, ErrorKind::invalid_argument, "recovery_quality.magnitude must be [min, max]");
                s.magnitude_min = m[0];
                s.magnitude_max = m[1];
            }
        }
        if (j.contains("segmentation"))
        {
            const auto &g = j["segmentation"];
            get_if(g, "seeds", s.segmentation_seeds);
            get_if(g, "include_random", s.include_random);
            get_if(g, "error_threshold", s.error_threshold);
        }
    }
    catch (const io::json::exception &e)
    {
        throw Error(ErrorKind::io, std::string("experiment spec: ") + e.what());
    }
    s.network.global_dim = s.network.n_classes = static_cast<std::size_t>(n_labels);
    s.validate();
    return s;
}

inline ExperimentSpec load_experiment_spec(const std::filesystem::path &path)
{
    return experiment_spec_from_json(io::read_json(path), path.parent_path());
}

// Per-component seeds. Each experiment forms its own namespace under the master
// seed: derive_seed(derive_seed(master, experiment), stream, index).
inline std::uint64_t experiment_seed(const ExperimentSpec &spec, const std::string &experiment)
{
    return derive_seed(spec.master_seed, experiment);
}

// ---------------------------------------------------------------------------
// AMC vs. iterations
// ---------------------------------------------------------------------------

struct AmcRun
{
    std::size_t K = 0;
    std::size_t seed_index = 0;
    OptimizationResult result;
};

struct AmcExperimentResult
{
    std::vector<AmcRun> runs;
    std::map<std::size_t, std::vector<double>> random_mu;  // K -> AMC of random configuration matrices
    Report report;

    double median_final(std::size_t K) const
    {
        std::vector<double> v;
        for (const auto &r : runs)
            if (r.K == K)
                v.push_back(r.result.mu);
        return median(v);
    }

    double mean_random(std::size_t K) const
    {
        const auto &v = random_mu.at(K);
        double s = 0.0;
        for (double x : v)
            s += x;
        return s / static_cast<double>(v.size());
    }

    static double median(std::vector<double> v)
    {
        require(!v.empty(), ErrorKind::invalid_argument, "median of an empty set");
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
};

inline std::string k_dir(std::size_t K) { return "K" + std::to_string(K); }
inline std::string seed_dir(std::size_t i) { return "seed" + std::to_string(i); }

// One Algorithm run per (K, seed index); writes trace.csv and config.csv per run
// under amc_vs_iterations/K<K>/seed<i>/ plus summary.csv and random_baseline.csv.
inline AmcExperimentResult experiment_amc_vs_iterations(const ExperimentSpec &spec, const CMatrix &A)
{
    namespace fs = std::filesystem;
    const std::uint64_t base = experiment_seed(spec, "amc_vs_iterations");
    const std::size_t Ns = spec.scene.geometry.surface.n_states();
    const fs::path dir = spec.output_dir / "amc_vs_iterations";

    AmcExperimentResult res;
    for (auto K : spec.amc_k_values)
        for (std::size_t i = 0; i < spec.amc_seeds; ++i)
            res.runs.push_back({K, i, {}});
    parallel_for(res.runs.size(), [&](std::size_t t) {
        AmcRun &run = res.runs[t];
        OptimizerParams p = spec.optimizer;
        p.rng_seed = derive_seed(base, "optimizer/K" + std::to_string(run.K), run.seed_index);
        run.result = optimize_config(A, run.K, Ns, p);
        const fs::path d = dir / k_dir(run.K) / seed_dir(run.seed_index);
        io::write_trace_csv(d / "trace.csv", run.result);
        io::write_configuration_csv(d / "config.csv", run.result.best);
    });

    std::vector<std::string> rows;
    for (const auto &r : res.runs)
    {
        res.report.add("amc trace non-increasing K=" + std::to_string(r.K) + " seed=" + std::to_string(r.seed_index),
                       r.result.trace.non_increasing() && r.result.mu <= r.result.initial_mu);
        rows.push_back(std::to_string(r.K) + ',' + std::to_string(r.seed_index) + ',' + io::fmt(r.result.initial_mu) + ',' +
                       io::fmt(r.result.mu) + ',' + std::to_string(r.result.trace.records.size()));
    }
    io::write_csv(dir / "summary.csv",
                  {"K,seed,initial_mu,final_mu,iterations", {"int", "int", "float", "float", "int"}}, rows);

    rows.clear();
    const std::size_t L = spec.scene.geometry.surface.n_groups();
    for (auto K : spec.amc_k_values)
    {
        auto &v = res.random_mu[K];
        v.resize(spec.random_baselines);
        parallel_for(spec.random_baselines, [&](std::size_t i) {
            Rng rng(derive_seed(base, "random/K" + std::to_string(K), i));
            v[i] = amc(measurement_matrix(random_configuration(K, L, Ns, rng), A));
        });
        for (std::size_t i = 0; i < v.size(); ++i)
            rows.push_back(std::to_string(K) + ',' + std::to_string(i) + ',' + io::fmt(v[i]));
    }
    io::write_csv(dir / "random_baseline.csv", {"K,index,mu", {"int", "int", "float"}}, rows);
    return res;
}

// ---------------------------------------------------------------------------
// Recovery quality vs. sparsity
// ---------------------------------------------------------------------------

// s distinct blocks, magnitudes uniform in [mag_min, mag_max], phases uniform.
inline CVector random_sparse_eta(std::size_t M, std::size_t s, double mag_min, double mag_max, Rng &rng)
{
    require(s <= M, ErrorKind::invalid_argument, "sparsity exceeds the number of blocks");
    std::vector<std::size_t> idx(M);
    for (std::size_t i = 0; i < M; ++i)
        idx[i] = i;
    // partial Fisher-Yates
    for (std::size_t i = 0; i < s; ++i)
    {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(M - 1)));
        std::swap(idx[i], idx[j]);
    }
    CVector eta = CVector::Zero(static_cast<Eigen::Index>(M));
    for (std::size_t i = 0; i < s; ++i)
    {
        const double mag = rng.uniform(mag_min, mag_max);
        const double ph = rng.uniform(0.0, 2.0 * pi);
        eta[static_cast<Eigen::Index>(idx[i])] = std::polar(mag, ph);
    }
    return eta;
}

struct RecoverySample
{
    std::string config_type;  // "optimized" or "random"
    std::size_t sparsity = 0;
    std::size_t seed_index = 0;
    double relative_error = 0.0;
    double residual = 0.0;
    double epsilon = 0.0;
};

struct RecoveryExperimentResult
{
    std::vector<RecoverySample> samples;
    Report report;

    double mean_error(const std::string &type, std::size_t s) const
    {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto &x : samples)
            if (x.config_type == type && x.sparsity == s)
            {
                sum += x.relative_error;
                ++n;
            }
        require(n > 0, ErrorKind::invalid_argument, "no samples for " + type + " at sparsity " + std::to_string(s));
        return sum / static_cast<double>(n);
    }
};

// Seed index i owns one optimized and one random C at K = recovery_k and one
// random eta per sparsity; both configuration types see the same eta.
inline RecoveryExperimentResult experiment_recovery_quality(const ExperimentSpec &spec, const CMatrix &A)
{
    namespace fs = std::filesystem;
    const std::uint64_t base = experiment_seed(spec, "recovery_quality");
    const std::size_t Ns = spec.scene.geometry.surface.n_states();
    const std::size_t L = spec.scene.geometry.surface.n_groups();
    const std::size_t M = static_cast<std::size_t>(A.cols());
    const std::size_t K = spec.recovery_k;
    const fs::path dir = spec.output_dir / "recovery_quality";

    // configurations per seed: [2i] optimized, [2i + 1] random
    std::vector<ConfigurationMatrix> configs(2 * spec.recovery_seeds);
    parallel_for(spec.recovery_seeds, [&](std::size_t i) {
        Rng rng(derive_seed(base, "random_config", i));
        configs[2 * i + 1] = random_configuration(K, L, Ns, rng);
        OptimizerParams p = spec.optimizer;
        p.rng_seed = derive_seed(base, "optimizer", i);
        configs[2 * i] = optimize_config(A, configs[2 * i + 1], p).best;
    });

    RecoveryExperimentResult res;
    for (std::size_t i = 0; i < spec.recovery_seeds; ++i)
        for (const char *type : {"optimized", "random"})
            for (auto s : spec.sparsities)
                res.samples.push_back({type, s, i, 0.0, 0.0, 0.0});

    RecoveryParams rp = spec.recovery;
    rp.epsilon = spec.auto_epsilon ? default_epsilon(spec.recovery_noise_sigma, K) : spec.recovery.epsilon;
    parallel_for(res.samples.size(), [&](std::size_t t) {
        RecoverySample &x = res.samples[t];
        const ConfigurationMatrix &C = configs[2 * x.seed_index + (x.config_type == "random" ? 1 : 0)];
        const CMatrix H = measurement_matrix(C, A);
        Rng rng(derive_seed(base, "eta/s" + std::to_string(x.sparsity), x.seed_index));
        const CVector eta = random_sparse_eta(M, x.sparsity, spec.magnitude_min, spec.magnitude_max, rng);
        const CVector y = simulate_received(eta, H, CVector::Zero(H.rows()), spec.recovery_noise_sigma,
                                            derive_seed(base, "noise/s" + std::to_string(x.sparsity), x.seed_index));
        const RecoveryResult r = recover_eta(H, y, CVector::Zero(H.rows()), rp);
        x.relative_error = relative_error(r.eta, eta);
        x.residual = r.residual;
        x.epsilon = rp.epsilon;
    });

    std::vector<std::string> rows;
    for (const auto &x : res.samples)
    {
        rows.push_back(x.config_type + ',' + std::to_string(x.sparsity) + ',' + std::to_string(x.seed_index) + ',' +
                       io::fmt(x.relative_error) + ',' + io::fmt(x.residual));
        if (x.epsilon > 0.0)
            res.report.add("recovery residual within epsilon (" + x.config_type + ", s=" + std::to_string(x.sparsity) +
                               ", seed=" + std::to_string(x.seed_index) + ")",
                           x.residual <= x.epsilon * 1.01);
    }
    io::write_csv(dir / "samples.csv",
                  {"config_type,s,seed,relative_error,residual", {"text", "int", "int", "float", "float"}}, rows);
    rows.clear();
    for (const char *type : {"optimized", "random"})
        for (auto s : spec.sparsities)
            rows.push_back(std::string(type) + ',' + std::to_string(s) + ',' + io::fmt(res.mean_error(type, s)));
    io::write_csv(dir / "summary.csv", {"config_type,s,mean_relative_error", {"text", "int", "float"}}, rows);
    for (std::size_t i = 0; i < spec.recovery_seeds; ++i)
    {
        io::write_configuration_csv(dir / seed_dir(i) / "optimized_config.csv", configs[2 * i]);
        io::write_configuration_csv(dir / seed_dir(i) / "random_config.csv", configs[2 * i + 1]);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

struct SegmentationCondition
{
    std::string name;       // "fixed_K1", "optimized_K10", "random_K10", ...
    std::string config_type;  // "fixed", "optimized", "random"
    std::size_t K = 1;
};

inline std::vector<SegmentationCondition> segmentation_conditions(const ExperimentSpec &spec)
{
    std::vector<SegmentationCondition> out;
    for (auto K : spec.k_values)
    {
        if (K == 1)
        {
            out.push_back({"fixed_K1", "fixed", 1});
            continue;
        }
        out.push_back({"optimized_K" + std::to_string(K), "optimized", K});
        if (spec.include_random)
            out.push_back({"random_K" + std::to_string(K), "random", K});
    }
    return out;
}

struct SegmentationRun
{
    SegmentationCondition condition;
    std::size_t seed_index = 0;
    double recovery_error = 0.0;  // mean relative eta error over the dataset
    std::vector<EpochRecord> trace;
};

// First epoch whose error rate is at or below threshold, or nullopt.
inline std::optional<std::size_t> epochs_to_threshold(const std::vector<EpochRecord> &trace, double threshold)
{
    for (const auto &r : trace)
        if (r.avg_error_rate <= threshold)
            return r.epoch;
    return std::nullopt;
}

struct SegmentationExperimentResult
{
    std::vector<SegmentationRun> runs;
    Report report;

    const SegmentationRun &find(const std::string &condition, std::size_t seed_index = 0) const
    {
        for (const auto &r : runs)
            if (r.condition.name == condition && r.seed_index == seed_index)
                return r;
        throw Error(ErrorKind::invalid_argument, "no segmentation run " + condition);
    }

    double final_error(const std::string &condition, std::size_t seed_index = 0) const
    {
        return find(condition, seed_index).trace.back().avg_error_rate;
    }
};

// Per (condition, seed index): configuration, calibration, scene_count cycles
// of recovered clouds, then training. Scenes and network initialization depend
// only on the seed index, so conditions differ only in C.
inline SegmentationExperimentResult experiment_segmentation(const ExperimentSpec &spec, const CMatrix &A)
{
    namespace fs = std::filesystem;
    const std::uint64_t base = experiment_seed(spec, "segmentation");
    const std::size_t Ns = spec.scene.geometry.surface.n_states();
    const std::size_t L = spec.scene.geometry.surface.n_groups();
    const fs::path dir = spec.output_dir / "segmentation";
    const auto conditions = segmentation_conditions(spec);

    SegmentationExperimentResult res;
    for (std::size_t i = 0; i < spec.segmentation_seeds; ++i)
        for (const auto &c : conditions)
            res.runs.push_back({c, i, 0.0, {}});

    parallel_for(res.runs.size(), [&](std::size_t t) {
        SegmentationRun &run = res.runs[t];
        const std::size_t i = run.seed_index;
        const std::size_t K = run.condition.K;
        ConfigurationMatrix C(K, L, Ns, 1);
        if (run.condition.config_type != "fixed")
        {
            Rng rng(derive_seed(base, "random_config/K" + std::to_string(K), i));
            C = random_configuration(K, L, Ns, rng);
            if (run.condition.config_type == "optimized")
            {
                OptimizerParams p = spec.optimizer;
                p.rng_seed = derive_seed(base, "optimizer/K" + std::to_string(K), i);
                C = optimize_config(A, C, p).best;
            }
        }
        CalibrationOptions co;
        co.noise_sigma = spec.noise_sigma;
        co.clutter_amplitude = spec.clutter_amplitude;
        co.seed = derive_seed(base, "calibration/" + run.condition.name, i);
        const CycleSystem sys = build_cycle_system(C, A, spec.scene.geometry.target, co);

        CycleParams cp;
        cp.noise_sigma = spec.noise_sigma;
        cp.recovery = spec.recovery;
        cp.auto_epsilon = spec.auto_epsilon;
        // scene i is shared by all conditions; measurement noise is per condition
        std::vector<DatasetItem> items(spec.scene_count);
        for (std::size_t n = 0; n < spec.scene_count; ++n)
        {
            DatasetItem &it = items[n];
            it.scene = generate_scene(spec.scene.shapes, spec.scene.placement, sys.target,
                                      derive_seed(base, "scene/" + std::to_string(i), n));
            cp.seed = derive_seed(base, "measurement/" + run.condition.name + "/" + std::to_string(i), n);
            const CycleResult r = run_cycle(sys, it.scene, nullptr, cp);
            it.y = r.y;
            it.cloud = r.cloud;
            it.labels = ground_truth_labels(it.scene, sys.target);
            run.recovery_error += r.metrics.relative_error / static_cast<double>(spec.scene_count);
        }

        const SegNetParams init = init_segnet(spec.network, derive_seed(base, "init", i));
        TrainConfig tc = spec.train;
        tc.rng_seed = derive_seed(base, "train", i);
        TrainResult tr = train(init, to_labeled_clouds(items), tc);
        run.trace = std::move(tr.trace);

        const fs::path d = dir / run.condition.name / seed_dir(i);
        io::write_train_trace_csv(d / "trace.csv", run.trace);
        io::write_configuration_csv(d / "config.csv", C);
        io::save_segnet(d / "model.json", tr.params);
    });

    std::vector<std::string> rows;
    for (const auto &r : res.runs)
    {
        const auto hit = epochs_to_threshold(r.trace, spec.error_threshold);
        const EpochRecord last = r.trace.empty() ? EpochRecord{} : r.trace.back();
        rows.push_back(r.condition.name + ',' + std::to_string(r.condition.K) + ',' + std::to_string(r.seed_index) + ',' +
                       io::fmt(r.recovery_error) + ',' + io::fmt(last.loss) + ',' + io::fmt(last.avg_error_rate) + ',' +
                       (hit ? std::to_string(*hit) : std::string("-1")));
        bool finite = true;
        for (const auto &e : r.trace)
            finite = finite && std::isfinite(e.loss) && e.loss >= 0.0 && e.avg_error_rate >= 0.0 && e.avg_error_rate <= 1.0;
        res.report.add("training trace finite and in range " + r.condition.name + " seed=" + std::to_string(r.seed_index),
                       finite);
    }
    io::write_csv(dir / "summary.csv",
                  {"condition,K,seed,recovery_error,final_loss,final_error,epochs_to_threshold",
                   {"text", "int", "int", "float", "float", "float", "int"}},
                  rows);
    return res;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct ExperimentResult
{
    std::optional<AmcExperimentResult> amc;
    std::optional<RecoveryExperimentResult> recovery;
    std::optional<SegmentationExperimentResult> segmentation;
    Report report;
};

// Hardware dwell facts are recorded, not simulated.
inline io::json experiment_metadata(const ExperimentSpec &spec)
{
    return {{"name", spec.name},
            {"master_seed", spec.master_seed},
            {"scene", io::scene_spec_to_json(spec.scene)},
            {"k_values", spec.k_values},
            {"noise_sigma", spec.noise_sigma},
            {"scene_count", spec.scene_count},
            {"experiments", spec.experiments},
            {"timing", {{"dwell_per_configuration_s", 0.1}, {"simulated", false}}}};
}

inline ExperimentResult run_experiment(const ExperimentSpec &spec)
{
    spec.validate();
    std::filesystem::create_directories(spec.output_dir);
    {
        auto out = io::open_out(spec.output_dir / "experiment.json");
        out << experiment_metadata(spec).dump(2) << '\n';
    }
    const CMatrix A = compute_A(spec.scene.geometry);
    ExperimentResult res;
    if (spec.runs("amc_vs_iterations"))
    {
        res.amc = experiment_amc_vs_iterations(spec, A);
        res.report.merge(res.amc->report);
    }
    if (spec.runs("recovery_quality"))
    {
        res.recovery = experiment_recovery_quality(spec, A);
        res.report.merge(res.recovery->report);
    }
    if (spec.runs("segmentation"))
    {
        res.segmentation = experiment_segmentation(spec, A);
        res.report.merge(res.segmentation->report);
    }
    res.report.merge(validate_csv_tree(spec.output_dir));
    return res;
}

} // namespace metasketch
