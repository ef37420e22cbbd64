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

#include <metasketch/optimizer.hpp>

#include <numeric>

using namespace metasketch;
using Catch::Matchers::WithinAbs;

namespace
{

CMatrix random_complex(Eigen::Index r, Eigen::Index c, std::uint64_t seed)
{
    Rng rng(seed);
    CMatrix H(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            H(i, j) = cplx(rng.normal(), rng.normal());
    return H;
}

// sum over ordered pairs m != m' of |<h_m, h_m'>| / (|h_m| |h_m'|), by explicit loops
double amc_oracle(const CMatrix &H)
{
    const Eigen::Index K = H.rows(), M = H.cols();
    double total = 0.0;
    for (Eigen::Index m = 0; m < M; ++m)
        for (Eigen::Index q = 0; q < M; ++q)
        {
            if (m == q)
                continue;
            cplx inner = 0.0;
            double nm = 0.0, nq = 0.0;
            for (Eigen::Index k = 0; k < K; ++k)
            {
                inner += std::conj(H(k, m)) * H(k, q);
                nm += std::norm(H(k, m));
                nq += std::norm(H(k, q));
            }
            total += std::abs(inner) / std::sqrt(nm * nq);
        }
    return total / static_cast<double>(M * (M - 1));
}

std::vector<int> argmax_oracle(const RVector &d, std::size_t Ns)
{
    std::vector<int> out;
    for (std::size_t l = 0; l * Ns < static_cast<std::size_t>(d.size()); ++l)
    {
        int best = 1;
        for (std::size_t j = 2; j <= Ns; ++j)
            if (d[static_cast<Eigen::Index>(l * Ns + j - 1)] > d[static_cast<Eigen::Index>(l * Ns + static_cast<std::size_t>(best) - 1)])
                best = static_cast<int>(j);
        out.push_back(best);
    }
    return out;
}

OptimizerParams fast_params(std::uint64_t seed = 1)
{
    OptimizerParams p;
    p.population_size = 8;
    p.ga_generations = 6;
    p.max_outer_iterations = 60;
    p.rng_seed = seed;
    return p;
}

} // namespace

TEST_CASE("amc examples", "[optimizer]")
{
    CHECK(amc(CMatrix::Identity(3, 3)) == 0.0);
    CMatrix two(3, 2);
    two.col(0) << cplx(1, 2), cplx(0, -1), cplx(3, 0);
    two.col(1) = two.col(0);
    CHECK_THAT(amc(two), WithinAbs(1.0, 1e-15));
    const CMatrix H = random_complex(4, 6, 3);
    CHECK_THAT(amc(H), WithinAbs(amc_oracle(H), 1e-12));
}

TEST_CASE("amc matches the double-loop oracle on random matrices", "[optimizer]")
{
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial)
    {
        const auto K = static_cast<Eigen::Index>(rng.uniform_int(1, 20));
        const auto M = static_cast<Eigen::Index>(rng.uniform_int(2, 40));
        const CMatrix H = random_complex(K, M, rng.next_u64());
        const double mu = amc(H);
        CHECK_THAT(mu, WithinAbs(amc_oracle(H), 1e-12));
        CHECK(mu >= 0.0);
        CHECK(mu <= 1.0 + 1e-15);
    }
}

TEST_CASE("amc errors on degenerate matrices", "[optimizer]")
{
    CMatrix H = random_complex(3, 4, 1);
    H.col(2).setZero();
    try
    {
        amc(H);
        FAIL("expected undefined coherence");
    }
    catch (const Error &e)
    {
        CHECK(e.kind() == ErrorKind::undefined_coherence);
    }
    CHECK_THROWS_AS(amc(random_complex(3, 1, 1)), Error);
    CHECK_THROWS_AS(coherence_map(H), Error);
}

TEST_CASE("amc is invariant to column scaling and permutation", "[optimizer]")
{
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial)
    {
        const CMatrix H = random_complex(5, 9, rng.next_u64());
        CMatrix scaled = H;
        for (Eigen::Index m = 0; m < H.cols(); ++m)
            scaled.col(m) *= std::polar(rng.uniform(0.01, 100.0), rng.uniform(0.0, 2.0 * pi));
        CHECK_THAT(amc(scaled), WithinAbs(amc(H), 1e-12));

        std::vector<Eigen::Index> perm(9);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = 8; i > 0; --i)
            std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
        CMatrix permuted(5, 9);
        for (Eigen::Index m = 0; m < 9; ++m)
            permuted.col(m) = H.col(perm[static_cast<std::size_t>(m)]);
        CHECK_THAT(amc(permuted), WithinAbs(amc(H), 1e-12));
    }
}

TEST_CASE("coherence_map is symmetric with unit diagonal and mean amc", "[optimizer]")
{
    CHECK(coherence_map(CMatrix::Identity(4, 4)) == RMatrix::Identity(4, 4));
    const CMatrix H = random_complex(5, 8, 4);
    const RMatrix map = coherence_map(H);
    CHECK(map == map.transpose());
    for (Eigen::Index m = 0; m < 8; ++m)
        CHECK(map(m, m) == 1.0);
    CHECK_THAT((map.sum() - 8.0) / 56.0, WithinAbs(amc(H), 1e-12));
}

TEST_CASE("RowCoherence equals the full amc with the row replaced", "[optimizer]")
{
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial)
    {
        const CMatrix H = random_complex(6, 11, rng.next_u64());
        const auto k = static_cast<std::size_t>(rng.uniform_int(0, 5));
        const RowCoherence rc(H, k);
        const Eigen::RowVectorXcd row = random_complex(1, 11, rng.next_u64()).row(0);
        CMatrix replaced = H;
        replaced.row(static_cast<Eigen::Index>(k)) = row;
        CHECK_THAT(rc(row), WithinAbs(amc(replaced), 1e-12));
    }
    CMatrix single = random_complex(1, 3, 1);
    const RowCoherence rc(single, 0);
    CHECK(std::isinf(rc(Eigen::RowVectorXcd::Zero(3))));
}

TEST_CASE("relax_row examples and round trip", "[optimizer]")
{
    CHECK(relax_row(ConfigurationMatrix(1, 1, 2, std::vector<int>{1}), 0) == (RVector(2) << 1, 0).finished());
    CHECK(relax_row(ConfigurationMatrix(1, 2, 2, std::vector<int>{2, 1}), 0) == (RVector(4) << 0, 1, 1, 0).finished());
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial)
    {
        const ConfigurationMatrix C = random_configuration(4, 7, 3, rng);
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(round_row(relax_row(C, k), 3) == C.row(k));
    }
}

TEST_CASE("round_row takes per-group argmax with low-index ties", "[optimizer]")
{
    CHECK(round_row((RVector(4) << 1, 0, 0, 1).finished(), 2) == std::vector<int>{1, 2});
    CHECK(round_row((RVector(2) << 0.5, 0.5).finished(), 2) == std::vector<int>{1});
    CHECK(round_row((RVector(3) << 0.2, 0.4, 0.4).finished(), 3) == std::vector<int>{2});
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial)
    {
        RVector d(12);
        for (auto &x : d)
            x = rng.uniform();
        for (int l = 0; l < 3; ++l)
            project_to_simplex(d.data() + 4 * l, 4);
        CHECK(round_row(d, 4) == argmax_oracle(d, 4));
    }
    CHECK_THROWS_AS(round_row(RVector::Zero(5), 2), Error);
}

TEST_CASE("simplex projection is the Euclidean nearest point", "[optimizer]")
{
    double a[2] = {0.5, 0.5};
    project_to_simplex(a, 2);
    CHECK(a[0] == 0.5);
    CHECK(a[1] == 0.5);
    double b[3] = {2.0, 0.0, -1.0};
    project_to_simplex(b, 3);
    CHECK(b[0] == 1.0);
    CHECK(b[1] == 0.0);
    CHECK(b[2] == 0.0);

    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial)
    {
        double v[4], p[4];
        for (int i = 0; i < 4; ++i)
            p[i] = v[i] = rng.uniform(-1.0, 2.0);
        project_to_simplex(p, 4);
        double sum = 0.0, dist = 0.0;
        for (int i = 0; i < 4; ++i)
        {
            CHECK(p[i] >= 0.0);
            sum += p[i];
            dist += (p[i] - v[i]) * (p[i] - v[i]);
        }
        CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
        // no sampled simplex point is closer
        for (int s = 0; s < 50; ++s)
        {
            double q[4], qs = 0.0, dq = 0.0;
            for (double &x : q)
                qs += (x = -std::log(rng.uniform(1e-12, 1.0)));
            for (int i = 0; i < 4; ++i)
                dq += (q[i] / qs - v[i]) * (q[i] / qs - v[i]);
            CHECK(dist <= dq + 1e-12);
        }
    }
}

TEST_CASE("pattern search never increases the objective", "[optimizer]")
{
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial)
    {
        const CMatrix A = random_complex(12, 10, rng.next_u64());
        const ConfigurationMatrix C = random_configuration(3, 4, 3, rng);
        const std::size_t k = static_cast<std::size_t>(trial % 3);
        const PatternSearchResult ps = pattern_search_row(relax_row(C, k), k, C, A, fast_params());
        CHECK(ps.objective <= ps.initial_objective);
        CMatrix H = measurement_matrix(C, A);
        H.row(static_cast<Eigen::Index>(k)) = ps.row.transpose().cast<cplx>() * A;
        CHECK_THAT(ps.objective, WithinAbs(amc(H), 1e-12));
        for (int l = 0; l < 4; ++l)
        {
            CHECK(ps.row.segment(3 * l, 3).minCoeff() >= 0.0);
            CHECK_THAT(ps.row.segment(3 * l, 3).sum(), WithinAbs(1.0, 1e-12));
        }
    }
}

TEST_CASE("pattern search keeps a fixed point unchanged", "[optimizer]")
{
    // both states of the single group give the same row up to a global phase,
    // so every relaxed point has the same coherence and no probe is accepted
    CMatrix A(2, 3);
    A.row(0) << cplx(1, 0), cplx(0, 1), cplx(2, -1);
    A.row(1) = A.row(0) * cplx(0, 1);
    const ConfigurationMatrix C(2, 1, 2, std::vector<int>{1, 2});
    const RVector start = relax_row(C, 0);
    const PatternSearchResult ps = pattern_search_row(start, 0, C, A, fast_params());
    CHECK(ps.row == start);
    CHECK(ps.objective == ps.initial_objective);
}

TEST_CASE("pattern search on L = 1 reaches at most the best corner when it ends on one", "[optimizer]")
{
    Rng rng(31);
    int corner_runs = 0;
    for (int trial = 0; trial < 40; ++trial)
    {
        const CMatrix A = random_complex(2, 4, rng.next_u64());
        const ConfigurationMatrix C = random_configuration(2, 1, 2, rng);
        const PatternSearchResult ps = pattern_search_row(relax_row(C, 0), 0, C, A, fast_params());
        double best_corner = std::numeric_limits<double>::infinity();
        for (int s = 1; s <= 2; ++s)
        {
            ConfigurationMatrix T = C;
            T.set_row(0, {s});
            best_corner = std::min(best_corner, amc(measurement_matrix(T, A)));
        }
        if (ps.row.maxCoeff() == 1.0)
        {
            ++corner_runs;
            CHECK(ps.objective <= best_corner + 1e-12);
        }
    }
    CHECK(corner_runs > 0);
}

TEST_CASE("GA refinement is elitist, exhaustive on tiny spaces and reproducible", "[optimizer]")
{
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial)
    {
        const CMatrix A = random_complex(2, 5, rng.next_u64());
        const ConfigurationMatrix C = random_configuration(3, 1, 2, rng);
        Rng ga(7);
        const GaResult r = ga_refine_row(C.row(1), 1, C, A, fast_params(), ga);
        double best = std::numeric_limits<double>::infinity();
        for (int s = 1; s <= 2; ++s)
        {
            ConfigurationMatrix T = C;
            T.set_row(1, {s});
            best = std::min(best, amc(measurement_matrix(T, A)));
        }
        CHECK_THAT(r.mu, WithinAbs(best, 1e-12));
    }

    const CMatrix A = random_complex(24, 12, 5);
    const ConfigurationMatrix C = random_configuration(4, 6, 4, rng);
    const double seeded_mu = amc(measurement_matrix(C, A));
    Rng g1(99), g2(99);
    const GaResult a = ga_refine_row(C.row(2), 2, C, A, fast_params(), g1);
    const GaResult b = ga_refine_row(C.row(2), 2, C, A, fast_params(), g2);
    CHECK(a.row == b.row);
    CHECK(a.mu == b.mu);
    CHECK(a.mu <= seeded_mu);
}

TEST_CASE("optimize_config on K = 1, L = 1, N_s = 2 returns the exhaustive argmin", "[optimizer]")
{
    const CMatrix A = random_complex(2, 4, 17);
    double best = std::numeric_limits<double>::infinity();
    for (int s = 1; s <= 2; ++s)
        best = std::min(best, amc(measurement_matrix(ConfigurationMatrix(1, 1, 2, std::vector<int>{s}), A)));
    const OptimizationResult r = optimize_config(A, 1, 2, fast_params());
    CHECK_THAT(r.mu, WithinAbs(best, 1e-12));
}

TEST_CASE("optimize_config on a K = 2 exhaustive space reaches a row-wise optimum", "[optimizer]")
{
    Rng rng(51);
    for (int trial = 0; trial < 10; ++trial)
    {
        const CMatrix A = random_complex(4, 5, rng.next_u64());
        const OptimizationResult r = optimize_config(A, 2, 2, fast_params(rng.next_u64()));
        double global = std::numeric_limits<double>::infinity();
        for (int code = 0; code < 16; ++code)
        {
            const ConfigurationMatrix C(2, 2, 2, std::vector<int>{1 + (code & 1), 1 + ((code >> 1) & 1),
                                                                   1 + ((code >> 2) & 1), 1 + ((code >> 3) & 1)});
            global = std::min(global, amc(measurement_matrix(C, A)));
        }
        CHECK(r.mu >= global - 1e-12);
        // no single-row change improves on the result
        for (std::size_t k = 0; k < 2; ++k)
            for (int code = 0; code < 4; ++code)
            {
                ConfigurationMatrix T = r.best;
                T.set_row(k, {1 + (code & 1), 1 + ((code >> 1) & 1)});
                CHECK(amc(measurement_matrix(T, A)) >= r.mu - 1e-12);
            }
    }
}

TEST_CASE("optimizer traces are non-increasing and consistent with C*", "[optimizer]")
{
    Rng rng(61);
    for (int trial = 0; trial < 6; ++trial)
    {
        const CMatrix A = random_complex(32, 9, rng.next_u64());
        const ConfigurationMatrix C0 = random_configuration(4, 8, 4, rng);
        const OptimizationResult r = optimize_config(A, C0, fast_params(rng.next_u64()));
        CHECK(r.trace.non_increasing());
        CHECK(r.mu <= r.initial_mu);
        CHECK_THAT(r.mu, WithinAbs(amc(measurement_matrix(r.best, A)), 1e-12));

        ConfigurationMatrix replay = C0;
        double last = r.initial_mu;
        std::size_t streak = 0;
        for (const auto &rec : r.trace.records)
        {
            CHECK(rec.mu <= last);
            if (rec.accepted)
            {
                CHECK(rec.mu < last);
                replay.set_row(rec.row, rec.new_row);
                CHECK_THAT(amc(measurement_matrix(replay, A)), WithinAbs(rec.mu, 1e-12));
                streak = 0;
            }
            else
            {
                CHECK(rec.mu == last);
                ++streak;
            }
            last = rec.mu;
        }
        CHECK(replay == r.best);
        CHECK((streak >= 4 || r.trace.records.size() == 60));
        // rows are visited round-robin
        for (std::size_t i = 0; i < r.trace.records.size(); ++i)
            CHECK(r.trace.records[i].row == i % 4);
    }
}

TEST_CASE("optimize_config is deterministic and thread-count independent", "[optimizer]")
{
    const CMatrix A = random_complex(32, 12, 71);
    const OptimizationResult a = optimize_config(A, 5, 4, fast_params(3));
    set_thread_count(4);
    const OptimizationResult b = optimize_config(A, 5, 4, fast_params(3));
    set_thread_count(1);
    CHECK(a.best == b.best);
    CHECK(a.mu == b.mu);
    CHECK(a.trace.records.size() == b.trace.records.size());
    const OptimizationResult c = optimize_config(A, 5, 4, fast_params(4));
    CHECK_FALSE(c.initial == a.initial);
}

TEST_CASE("optimizer parameters are validated", "[optimizer]")
{
    OptimizerParams p;
    p.population_size = 1;
    CHECK_THROWS_AS(p.validate(), Error);
    p = OptimizerParams{};
    p.ga_mutation_rate = 1.5;
    CHECK_THROWS_AS(p.validate(), Error);
    p = OptimizerParams{};
    p.pattern_search_min_step = 0.0;
    CHECK_THROWS_AS(p.validate(), Error);
    CHECK_THROWS_AS(optimize_config(random_complex(8, 4, 1), 0, 4, OptimizerParams{}), Error);
}
