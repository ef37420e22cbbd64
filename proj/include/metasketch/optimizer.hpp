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
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace metasketch
{

// ---------------------------------------------------------------------------
// Average mutual coherence
// ---------------------------------------------------------------------------

namespace detail
{

inline RVector column_norms(const CMatrix &H)
{
    require(H.cols() >= 2, ErrorKind::undefined_coherence, "coherence needs at least two columns");
    RVector norms = H.colwise().norm().transpose();
    for (Eigen::Index m = 0; m < norms.size(); ++m)
        require(norms[m] > 0.0 && std::isfinite(norms[m]), ErrorKind::undefined_coherence,
                "column " + std::to_string(m) + " of H is zero or non-finite");
    return norms;
}

} // namespace detail

// Normalized modulus of the Hermitian inner products of the columns of H:
// entry (m, m') = |h_m^H h_m'| / (|h_m| |h_m'|), unit diagonal.
inline RMatrix coherence_map(const CMatrix &H)
{
    const RVector norms = detail::column_norms(H);
    const CMatrix G = H.adjoint() * H;
    const Eigen::Index M = H.cols();
    RMatrix map(M, M);
    for (Eigen::Index m = 0; m < M; ++m)
    {
        map(m, m) = 1.0;
        for (Eigen::Index j = m + 1; j < M; ++j)
        {
            const double c = std::abs(G(m, j)) / (norms[m] * norms[j]);
            map(m, j) = c;
            map(j, m) = c;
        }
    }
    return map;
}

// Mean of the off-diagonal entries of coherence_map(H); lies in [0, 1].
inline double amc(const CMatrix &H)
{
    const RVector norms = detail::column_norms(H);
    const CMatrix G = H.adjoint() * H;
    const Eigen::Index M = H.cols();
    double sum = 0.0;
    for (Eigen::Index m = 0; m < M; ++m)
        for (Eigen::Index j = m + 1; j < M; ++j)
            sum += std::abs(G(m, j)) / (norms[m] * norms[j]);
    return 2.0 * sum / (static_cast<double>(M) * static_cast<double>(M - 1));
}

// AMC of H with row k replaced by a candidate row. The Gram matrix of the
// other K - 1 rows is cached, so each evaluation costs O(M^2) instead of O(K M^2).
class RowCoherence
{
  public:
    RowCoherence(const CMatrix &H, std::size_t k) : M_(H.cols())
    {
        require(k < static_cast<std::size_t>(H.rows()), ErrorKind::dimension_mismatch, "row index out of range");
        gram_ = H.adjoint() * H;
        const Eigen::RowVectorXcd r = H.row(static_cast<Eigen::Index>(k));
        gram_.noalias() -= r.adjoint() * r;
    }

    // +inf when the candidate leaves a zero column (coherence undefined).
    double operator()(const Eigen::RowVectorXcd &row) const
    {
        thread_local RVector norms;
        norms.resize(M_);
        for (Eigen::Index m = 0; m < M_; ++m)
        {
            const double d = gram_(m, m).real() + std::norm(row[m]);
            if (!(d > 0.0))
                return std::numeric_limits<double>::infinity();
            norms[m] = std::sqrt(d);
        }
        double sum = 0.0;
        for (Eigen::Index j = 1; j < M_; ++j)
        {
            const cplx rj = row[j];
            const cplx *g = gram_.col(j).data();
            double partial = 0.0;
            for (Eigen::Index m = 0; m < j; ++m)
            {
                const cplx v = g[m] + std::conj(row[m]) * rj;
                partial += std::sqrt(v.real() * v.real() + v.imag() * v.imag()) / norms[m];
            }
            sum += partial / norms[j];
        }
        return 2.0 * sum / (static_cast<double>(M_) * static_cast<double>(M_ - 1));
    }

  private:
    Eigen::Index M_;
    CMatrix gram_;
};

// ---------------------------------------------------------------------------
// Algorithm parameters and trace
// ---------------------------------------------------------------------------

struct OptimizerParams
{
    std::size_t population_size = 20;        // N_P
    std::size_t ga_generations = 30;
    double ga_mutation_rate = 0.1;
    double pattern_search_initial_step = 0.5;
    double pattern_search_min_step = 1.0 / 64.0;
    std::size_t pattern_search_max_sweeps = 50;  // poll sweeps per step size
    std::size_t max_outer_iterations = 400;
    std::uint64_t rng_seed = 1;

    void validate() const
    {
        require(population_size >= 2, ErrorKind::invalid_argument, "GA population size must be >= 2");
        require(ga_mutation_rate >= 0.0 && ga_mutation_rate <= 1.0, ErrorKind::invalid_argument,
                "GA mutation rate must lie in [0, 1]");
        require(pattern_search_initial_step > 0.0 && pattern_search_min_step > 0.0, ErrorKind::invalid_argument,
                "pattern search steps must be positive");
        require(pattern_search_min_step <= pattern_search_initial_step, ErrorKind::invalid_argument,
                "pattern search min step must not exceed the initial step");
        require(pattern_search_max_sweeps >= 1, ErrorKind::invalid_argument, "pattern search needs >= 1 sweep");
    }
};

struct TraceRecord
{
    std::size_t iteration = 0;  // 1-based outer iteration
    std::size_t row = 0;        // 0-based row k visited in this iteration
    double mu = 0.0;            // best AMC after the iteration
    bool accepted = false;
    std::vector<int> new_row;   // row written into C* when accepted
};

struct OptimizationTrace
{
    std::vector<TraceRecord> records;

    bool non_increasing() const
    {
        for (std::size_t i = 1; i < records.size(); ++i)
            if (records[i].mu > records[i - 1].mu)
                return false;
        return true;
    }
};

struct OptimizationResult
{
    ConfigurationMatrix initial;
    ConfigurationMatrix best;
    double initial_mu = 0.0;
    double mu = 0.0;
    OptimizationTrace trace;
};

// ---------------------------------------------------------------------------
// Relaxation and rounding
// ---------------------------------------------------------------------------

// Row k of C as a relaxed one-hot vector of length L N_s.
inline RVector relax_row(const ConfigurationMatrix &C, std::size_t k)
{
    require(k < C.rows(), ErrorKind::dimension_mismatch, "row index out of range");
    const std::size_t Ns = C.n_states();
    RVector d = RVector::Zero(static_cast<Eigen::Index>(C.groups() * Ns));
    for (std::size_t l = 0; l < C.groups(); ++l)
        d[static_cast<Eigen::Index>(Ns * l + static_cast<std::size_t>(C(k, l) - 1))] = 1.0;
    return d;
}

// Per group, the state with the largest weight; ties go to the lowest state.
inline std::vector<int> round_row(const RVector &d, std::size_t n_states)
{
    require(n_states >= 1 && d.size() % static_cast<Eigen::Index>(n_states) == 0, ErrorKind::dimension_mismatch,
            "relaxed row length must be a multiple of N_s");
    const std::size_t L = static_cast<std::size_t>(d.size()) / n_states;
    std::vector<int> row(L);
    for (std::size_t l = 0; l < L; ++l)
    {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n_states; ++j)
            if (d[static_cast<Eigen::Index>(n_states * l + j)] > d[static_cast<Eigen::Index>(n_states * l + best)])
                best = j;
        row[l] = static_cast<int>(best + 1);
    }
    return row;
}

// Euclidean projection of v onto the probability simplex (sort-based).
inline void project_to_simplex(double *v, std::size_t n)
{
    std::vector<double> u(v, v + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < n; ++j)
    {
        cumsum += u[j];
        const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0)
            theta = t;
    }
    for (std::size_t j = 0; j < n; ++j)
        v[j] = std::max(0.0, v[j] - theta);
}

// ---------------------------------------------------------------------------
// Pattern search on a relaxed row
// ---------------------------------------------------------------------------

struct PatternSearchResult
{
    RVector row;
    double objective = 0.0;
    double initial_objective = 0.0;
    std::size_t evaluations = 0;
};

// Compass search over the L N_s weights of row k, other rows of C held fixed.
// Each probe moves one coordinate by +-step and is projected back onto its
// group's simplex; a probe is taken when it strictly lowers the AMC of
// [d; D_{-k}] A. The step halves when a full sweep finds no improvement.
inline PatternSearchResult pattern_search_row(const RVector &start, std::size_t k, const ConfigurationMatrix &C,
                                              const CMatrix &A, const OptimizerParams &params)
{
    params.validate();
    const std::size_t Ns = C.n_states();
    const std::size_t L = C.groups();
    require(static_cast<std::size_t>(start.size()) == L * Ns, ErrorKind::dimension_mismatch,
            "relaxed row length must equal L * N_s");
    require(static_cast<std::size_t>(A.rows()) == L * Ns, ErrorKind::dimension_mismatch, "A must have L * N_s rows");

    const RowCoherence objective(measurement_matrix(C, A), k);
    PatternSearchResult res;
    res.row = start;
    Eigen::RowVectorXcd current = start.transpose().cast<cplx>() * A;
    res.objective = objective(current);
    res.initial_objective = res.objective;
    res.evaluations = 1;

    std::vector<double> probe(Ns);
    Eigen::RowVectorXcd candidate(A.cols());
    for (double step = params.pattern_search_initial_step; step >= params.pattern_search_min_step * (1.0 - 1e-12);
         step *= 0.5)
    {
        for (std::size_t sweep = 0; sweep < params.pattern_search_max_sweeps; ++sweep)
        {
            bool improved = false;
            for (std::size_t i = 0; i < L * Ns; ++i)
            {
                const std::size_t g = i / Ns;
                const Eigen::Index base = static_cast<Eigen::Index>(g * Ns);
                for (double sign : {1.0, -1.0})
                {
                    for (std::size_t j = 0; j < Ns; ++j)
                        probe[j] = res.row[base + static_cast<Eigen::Index>(j)];
                    probe[i - g * Ns] += sign * step;
                    project_to_simplex(probe.data(), Ns);

                    bool moved = false;
                    candidate = current;
                    for (std::size_t j = 0; j < Ns; ++j)
                    {
                        const double delta = probe[j] - res.row[base + static_cast<Eigen::Index>(j)];
                        if (delta != 0.0)
                        {
                            candidate += delta * A.row(base + static_cast<Eigen::Index>(j));
                            moved = true;
                        }
                    }
                    if (!moved)
                        continue;
                    const double f = objective(candidate);
                    ++res.evaluations;
                    if (f < res.objective)
                    {
                        for (std::size_t j = 0; j < Ns; ++j)
                            res.row[base + static_cast<Eigen::Index>(j)] = probe[j];
                        current = candidate;
                        res.objective = f;
                        improved = true;
                    }
                }
            }
            if (!improved)
                break;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Genetic refinement of a discrete row
// ---------------------------------------------------------------------------

struct GaResult
{
    std::vector<int> row;
    double mu = 0.0;  // AMC of g(C) with row k replaced by row
};

// GA over rows in [1, N_s]^L, initial population {seed_row} plus N_P - 1 uniform
// random rows. Tournament selection (size 2), uniform crossover, per-gene
// mutation to a uniform random state, elitism of one. Ranking is by AMC, then
// by lexicographic row, so results do not depend on evaluation order.
inline GaResult ga_refine_row(const std::vector<int> &seed_row, std::size_t k, const ConfigurationMatrix &C,
                              const CMatrix &A, const OptimizerParams &params, Rng &rng)
{
    params.validate();
    const std::size_t Ns = C.n_states();
    const std::size_t L = C.groups();
    require(seed_row.size() == L, ErrorKind::dimension_mismatch, "seed row length must equal L");
    const RowCoherence objective(measurement_matrix(C, A), k);

    struct Individual
    {
        std::vector<int> genes;
        double fitness;
    };
    auto better = [](const Individual &a, const Individual &b) {
        if (a.fitness != b.fitness)
            return a.fitness < b.fitness;
        return a.genes < b.genes;
    };
    auto evaluate = [&](std::vector<int> genes) {
        const double f = objective(measurement_row(genes, Ns, A));
        return Individual{std::move(genes), f};
    };
    auto random_genes = [&]() {
        std::vector<int> g(L);
        for (auto &s : g)
            s = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(Ns)));
        return g;
    };

    std::vector<Individual> pop;
    pop.reserve(params.population_size);
    pop.push_back(evaluate(seed_row));
    while (pop.size() < params.population_size)
        pop.push_back(evaluate(random_genes()));

    auto tournament = [&]() -> const Individual & {
        const auto a = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pop.size() - 1)));
        const auto b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pop.size() - 1)));
        return better(pop[b], pop[a]) ? pop[b] : pop[a];
    };

    for (std::size_t gen = 0; gen < params.ga_generations; ++gen)
    {
        std::sort(pop.begin(), pop.end(), better);
        std::vector<Individual> next;
        next.reserve(params.population_size);
        next.push_back(pop.front());
        while (next.size() < params.population_size)
        {
            const Individual &pa = tournament();
            const Individual &pb = tournament();
            std::vector<int> child(L);
            for (std::size_t l = 0; l < L; ++l)
            {
                child[l] = rng.uniform() < 0.5 ? pa.genes[l] : pb.genes[l];
                if (rng.uniform() < params.ga_mutation_rate)
                    child[l] = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(Ns)));
            }
            next.push_back(evaluate(std::move(child)));
        }
        pop = std::move(next);
    }
    const Individual &best = *std::min_element(pop.begin(), pop.end(), better);

    ConfigurationMatrix trial = C;
    trial.set_row(k, best.genes);
    return {best.genes, amc(measurement_matrix(trial, A))};
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

// Row-cycling configuration optimizer. Each iteration visits row k:
// relax -> pattern search -> round -> GA, and writes the GA row into C* only when
// it strictly lowers the AMC. Stops after K consecutive rows without improvement
// or after max_outer_iterations.
inline OptimizationResult optimize_config(const CMatrix &A, const ConfigurationMatrix &initial,
                                          const OptimizerParams &params)
{
    params.validate();
    require(static_cast<std::size_t>(A.rows()) == initial.groups() * initial.n_states(), ErrorKind::dimension_mismatch,
            "A must have L * N_s rows");
    const std::size_t K = initial.rows();

    OptimizationResult res;
    res.initial = initial;
    res.best = initial;
    res.initial_mu = amc(measurement_matrix(initial, A));
    res.mu = res.initial_mu;

    std::size_t non_improving = 0;
    std::size_t k = 0;
    for (std::size_t iter = 1; iter <= params.max_outer_iterations; ++iter)
    {
        const RVector relaxed = relax_row(res.best, k);
        const PatternSearchResult ps = pattern_search_row(relaxed, k, res.best, A, params);
        const std::vector<int> rounded = round_row(ps.row, res.best.n_states());
        Rng ga_rng(derive_seed(params.rng_seed, "optimizer/ga", iter));
        GaResult ga = ga_refine_row(rounded, k, res.best, A, params, ga_rng);

        TraceRecord rec;
        rec.iteration = iter;
        rec.row = k;
        rec.accepted = ga.mu < res.mu;
        if (rec.accepted)
        {
            res.mu = ga.mu;
            res.best.set_row(k, ga.row);
            rec.new_row = std::move(ga.row);
            non_improving = 0;
        }
        else
        {
            ++non_improving;
        }
        rec.mu = res.mu;
        res.trace.records.push_back(std::move(rec));

        if (non_improving >= K)
            break;
        k = (k + 1) % K;
    }
    return res;
}

// Starts from a uniformly random C^(0) drawn from params.rng_seed.
inline OptimizationResult optimize_config(const CMatrix &A, std::size_t K, std::size_t n_states,
                                          const OptimizerParams &params)
{
    require(K >= 1, ErrorKind::invalid_argument, "K must be >= 1");
    require(n_states >= 2 && A.rows() % static_cast<Eigen::Index>(n_states) == 0, ErrorKind::dimension_mismatch,
            "A rows must be a multiple of N_s");
    Rng rng(derive_seed(params.rng_seed, "optimizer/initial"));
    const std::size_t L = static_cast<std::size_t>(A.rows()) / n_states;
    return optimize_config(A, random_configuration(K, L, n_states, rng), params);
}

} // namespace metasketch
