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

#include "core.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "scene.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace metasketch
{

// K configurations of L group states each; states are 1-based in [1, n_states].
class ConfigurationMatrix
{
  public:
    ConfigurationMatrix() = default;

    ConfigurationMatrix(std::size_t K, std::size_t L, std::size_t n_states, int fill = 1)
        : K_(K), L_(L), n_states_(n_states), states_(K * L, fill)
    {
        validate();
    }

    ConfigurationMatrix(std::size_t K, std::size_t L, std::size_t n_states, std::vector<int> states)
        : K_(K), L_(L), n_states_(n_states), states_(std::move(states))
    {
        validate();
    }

    std::size_t rows() const { return K_; }
    std::size_t groups() const { return L_; }
    std::size_t n_states() const { return n_states_; }

    int operator()(std::size_t k, std::size_t l) const { return states_[k * L_ + l]; }
    int &operator()(std::size_t k, std::size_t l) { return states_[k * L_ + l]; }

    std::vector<int> row(std::size_t k) const
    {
        return {states_.begin() + static_cast<std::ptrdiff_t>(k * L_),
                states_.begin() + static_cast<std::ptrdiff_t>((k + 1) * L_)};
    }

    void set_row(std::size_t k, const std::vector<int> &r)
    {
        require(r.size() == L_, ErrorKind::dimension_mismatch, "configuration row length must equal L");
        for (std::size_t l = 0; l < L_; ++l)
        {
            require(r[l] >= 1 && static_cast<std::size_t>(r[l]) <= n_states_, ErrorKind::invalid_argument,
                    "configuration state out of range");
            states_[k * L_ + l] = r[l];
        }
    }

    const std::vector<int> &data() const { return states_; }

    bool operator==(const ConfigurationMatrix &) const = default;

    void validate() const
    {
        require(K_ >= 1, ErrorKind::invalid_argument, "configuration matrix needs K >= 1");
        require(L_ >= 1, ErrorKind::invalid_argument, "configuration matrix needs L >= 1");
        require(n_states_ >= 2, ErrorKind::invalid_argument, "configuration matrix needs N_s >= 2");
        require(states_.size() == K_ * L_, ErrorKind::dimension_mismatch, "configuration data must hold K * L states");
        for (int s : states_)
            require(s >= 1 && static_cast<std::size_t>(s) <= n_states_, ErrorKind::invalid_argument,
                    "configuration state out of range");
    }

  private:
    std::size_t K_ = 0;
    std::size_t L_ = 0;
    std::size_t n_states_ = 0;
    std::vector<int> states_;
};

// Entries drawn uniformly from [1, n_states].
inline ConfigurationMatrix random_configuration(std::size_t K, std::size_t L, std::size_t n_states, Rng &rng)
{
    std::vector<int> states(K * L);
    for (auto &s : states)
        s = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(n_states)));
    return {K, L, n_states, std::move(states)};
}

// ---------------------------------------------------------------------------
// Channel gain matrix
// ---------------------------------------------------------------------------

// (N_s L) x M matrix; row N_s * l + (i - 1) holds the gain from Tx to Rx via
// group l in state i and block m:
//   sum_{n in group l} lambda^2 r_{n,m}(i) sqrt(gT_n gR_m) exp(-j 2 pi (d_n + d_nm) / lambda)
//                      / ((4 pi)^2 d_n d_nm)
// where d_n = |Tx - element n| and d_nm = |element n - block m| + |block m - Rx|.
inline CMatrix compute_A(const SurfaceSpec &surface, const Layout &layout, const TargetSpace &target)
{
    surface.validate();
    layout.validate();
    const std::size_t N = surface.n_elements();
    const std::size_t L = surface.n_groups();
    const std::size_t Ns = surface.n_states();
    const std::size_t M = target.size();
    const double lambda = layout.wavelength;
    const double scale = lambda * lambda / ((4.0 * pi) * (4.0 * pi));
    const Vec3 normal = surface.normal();

    std::vector<Vec3> elem(N);
    std::vector<double> d_tx(N), g_tx(N);
    for (std::size_t n = 0; n < N; ++n)
    {
        elem[n] = surface.element_position(n);
        d_tx[n] = (elem[n] - layout.tx_pos).norm();
        require(d_tx[n] > 0.0, ErrorKind::singular_geometry, "Tx coincides with element " + std::to_string(n));
        g_tx[n] = layout.tx_gain(elem[n]);
    }

    CMatrix A = CMatrix::Zero(static_cast<Eigen::Index>(Ns * L), static_cast<Eigen::Index>(M));
    parallel_for(M, [&](std::size_t m) {
        const Vec3 &block = target.center(m);
        const double to_rx = (block - layout.rx_pos).norm();
        require(to_rx > 0.0, ErrorKind::singular_geometry, "Rx coincides with block " + std::to_string(m));
        const double g_rx = layout.rx_gain(block);
        std::vector<cplx> group_gain(L, cplx(0.0, 0.0));
        for (std::size_t n = 0; n < N; ++n)
        {
            const Vec3 out = block - elem[n];
            const double to_block = out.norm();
            require(to_block > 0.0, ErrorKind::singular_geometry,
                    "element " + std::to_string(n) + " coincides with block " + std::to_string(m));
            const double d_nm = to_block + to_rx;
            double falloff = 1.0;
            if (surface.angular_falloff > 0.0)
                falloff = std::pow(std::max(0.0, out.dot(normal) / to_block), surface.angular_falloff);
            const double amp = scale * std::sqrt(g_tx[n] * g_rx) * falloff / (d_tx[n] * d_nm);
            const double phase = -2.0 * pi * (d_tx[n] + d_nm) / lambda;
            group_gain[static_cast<std::size_t>(surface.group_of_element[n])] += std::polar(amp, phase);
        }
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t i = 0; i < Ns; ++i)
                A(static_cast<Eigen::Index>(Ns * l + i), static_cast<Eigen::Index>(m)) =
                    surface.state_table[i] * group_gain[l];
    });
    return A;
}

inline CMatrix compute_A(const SceneGeometry &geo) { return compute_A(geo.surface, geo.layout, geo.target); }

// Zero-one K x (L N_s) matrix: entry (k, N_s l + i - 1) is 1 iff C(k, l) == i.
inline RMatrix expand_D(const ConfigurationMatrix &C)
{
    const std::size_t Ns = C.n_states();
    RMatrix D = RMatrix::Zero(static_cast<Eigen::Index>(C.rows()), static_cast<Eigen::Index>(C.groups() * Ns));
    for (std::size_t k = 0; k < C.rows(); ++k)
        for (std::size_t l = 0; l < C.groups(); ++l)
            D(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(Ns * l + static_cast<std::size_t>(C(k, l) - 1))) = 1.0;
    return D;
}

// Row of g(C) for one configuration: the sum of the A rows selected by it.
inline Eigen::RowVectorXcd measurement_row(const std::vector<int> &config, std::size_t n_states, const CMatrix &A)
{
    Eigen::RowVectorXcd r = Eigen::RowVectorXcd::Zero(A.cols());
    for (std::size_t l = 0; l < config.size(); ++l)
        r += A.row(static_cast<Eigen::Index>(n_states * l + static_cast<std::size_t>(config[l] - 1)));
    return r;
}

// H = g(C) = D A.
inline CMatrix measurement_matrix(const ConfigurationMatrix &C, const CMatrix &A)
{
    require(static_cast<std::size_t>(A.rows()) == C.groups() * C.n_states(), ErrorKind::dimension_mismatch,
            "A must have L * N_s rows for configuration matrix C");
    CMatrix H(static_cast<Eigen::Index>(C.rows()), A.cols());
    for (std::size_t k = 0; k < C.rows(); ++k)
        H.row(static_cast<Eigen::Index>(k)) = measurement_row(C.row(k), C.n_states(), A);
    return H;
}

// ---------------------------------------------------------------------------
// Received signals
// ---------------------------------------------------------------------------

// Adds circularly-symmetric complex Gaussian noise with per-component std sigma.
inline void add_noise(CVector &y, double sigma, Rng &rng)
{
    if (sigma == 0.0)
        return;
    for (Eigen::Index k = 0; k < y.size(); ++k)
    {
        const double re = rng.normal();
        const double im = rng.normal();
        y[k] += cplx(sigma * re, sigma * im);
    }
}

// y = background + H eta + e.
inline CVector simulate_received(const CVector &eta, const CMatrix &H, const CVector &background, double noise_sigma,
                                 std::uint64_t seed)
{
    require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorKind::invalid_argument, "noise sigma must be >= 0");
    require(eta.size() == H.cols(), ErrorKind::dimension_mismatch, "eta length must equal the number of blocks");
    require(background.size() == H.rows(), ErrorKind::dimension_mismatch, "background length must equal K");
    CVector y = background + H * eta;
    Rng rng(seed);
    add_noise(y, noise_sigma, rng);
    return y;
}

inline CVector simulate_received(const LabeledScene &scene, const CMatrix &H, const CVector &background,
                                 double noise_sigma, std::uint64_t seed)
{
    scene.validate(static_cast<std::size_t>(H.cols()));
    return simulate_received(scene.dense_eta(static_cast<std::size_t>(H.cols())), H, background, noise_sigma, seed);
}

// Static clutter: fixed complex Gaussian vector of per-component std amplitude.
// Zero amplitude gives the free-space (all-zero) background.
inline CVector static_background(std::size_t K, double amplitude, std::uint64_t seed)
{
    CVector b = CVector::Zero(static_cast<Eigen::Index>(K));
    Rng rng(seed);
    add_noise(b, amplitude, rng);
    return b;
}

struct CalibrationOptions
{
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    double clutter_amplitude = 0.0;  // static background scattering, 0 = free space
};

struct Calibration
{
    CMatrix H;        // H*, column m measured with a unit patch at block m
    CVector background;  // y^B, measured with the target space empty
};

// Sweeps a unit-reflectivity patch over every block. Each measurement draws its
// noise from its own seed-derived stream, so columns can be filled in any order.
inline Calibration calibrate(const ConfigurationMatrix &C, const CMatrix &A, const CalibrationOptions &opt)
{
    const CMatrix H = measurement_matrix(C, A);
    const auto K = static_cast<std::size_t>(H.rows());
    const auto M = static_cast<std::size_t>(H.cols());
    const CVector clutter = static_background(K, opt.clutter_amplitude, derive_seed(opt.seed, "calibrate/clutter"));

    Calibration cal;
    cal.background = simulate_received(CVector::Zero(H.cols()), H, clutter, opt.noise_sigma,
                                       derive_seed(opt.seed, "calibrate/background"));
    cal.H.resize(H.rows(), H.cols());
    parallel_for(M, [&](std::size_t m) {
        CVector patch = CVector::Zero(H.cols());
        patch[static_cast<Eigen::Index>(m)] = cplx(1.0, 0.0);  // eta^M_m = 1
        const CVector y_m = simulate_received(patch, H, clutter, opt.noise_sigma, derive_seed(opt.seed, "calibrate/patch", m));
        cal.H.col(static_cast<Eigen::Index>(m)) = (y_m - cal.background) / cplx(1.0, 0.0);
    });
    return cal;
}

inline Calibration calibrate(const ConfigurationMatrix &C, const SurfaceSpec &surface, const Layout &layout,
                             const TargetSpace &target, const CalibrationOptions &opt)
{
    return calibrate(C, compute_A(surface, layout, target), opt);
}

} // namespace metasketch
