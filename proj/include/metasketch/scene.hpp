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
#include "rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace metasketch
{

// ---------------------------------------------------------------------------
// Metasurface
// ---------------------------------------------------------------------------

// Coordinate plane holding the surface. The surface is centered on the origin
// and its normal points along the remaining positive axis.
enum class SurfacePlane
{
    yz,
    xz,
    xy
};

struct SurfaceSpec
{
    std::size_t rows = 16;
    std::size_t cols = 16;
    double pitch = 0.03;                    // element spacing [m]
    SurfacePlane plane = SurfacePlane::yz;
    std::vector<int> group_of_element;      // 0-based group of element n = row * cols + col
    std::vector<cplx> state_table;          // reflection coefficient of state s is state_table[s - 1]
    double angular_falloff = 0.0;           // exponent q of the optional cos^q(incidence) factor

    std::size_t n_elements() const { return rows * cols; }
    std::size_t n_states() const { return state_table.size(); }

    std::size_t n_groups() const
    {
        int top = -1;
        for (int g : group_of_element)
            top = std::max(top, g);
        return static_cast<std::size_t>(top + 1);
    }

    Vec3 normal() const
    {
        switch (plane)
        {
        case SurfacePlane::yz: return {1.0, 0.0, 0.0};
        case SurfacePlane::xz: return {0.0, 1.0, 0.0};
        case SurfacePlane::xy: return {0.0, 0.0, 1.0};
        }
        return {1.0, 0.0, 0.0};
    }

    Vec3 element_position(std::size_t n) const
    {
        const double u = (static_cast<double>(n % cols) - 0.5 * static_cast<double>(cols - 1)) * pitch;
        const double v = (static_cast<double>(n / cols) - 0.5 * static_cast<double>(rows - 1)) * pitch;
        switch (plane)
        {
        case SurfacePlane::yz: return {0.0, u, v};
        case SurfacePlane::xz: return {u, 0.0, v};
        case SurfacePlane::xy: return {u, v, 0.0};
        }
        return {0.0, u, v};
    }

    // Elements of each group, in element order.
    std::vector<std::vector<std::size_t>> group_members() const
    {
        std::vector<std::vector<std::size_t>> members(n_groups());
        for (std::size_t n = 0; n < group_of_element.size(); ++n)
            members[static_cast<std::size_t>(group_of_element[n])].push_back(n);
        return members;
    }

    void validate() const
    {
        require(rows >= 1 && cols >= 1, ErrorKind::invalid_geometry, "surface needs at least one element");
        require(pitch > 0.0 && std::isfinite(pitch), ErrorKind::invalid_geometry, "surface pitch must be positive");
        require(group_of_element.size() == n_elements(), ErrorKind::invalid_geometry,
                "group_of_element must list every element exactly once");
        for (int g : group_of_element)
            require(g >= 0, ErrorKind::invalid_geometry, "group indices must be non-negative");
        for (const auto &m : group_members())
            require(!m.empty(), ErrorKind::invalid_geometry, "every group needs at least one element");
        require(n_states() >= 2, ErrorKind::invalid_geometry, "a metasurface element needs at least two states");
        for (const cplx &r : state_table)
            require(std::isfinite(r.real()) && std::isfinite(r.imag()) && std::abs(r) <= 1.0 + 1e-12,
                    ErrorKind::invalid_geometry, "state reflection coefficients must satisfy |r| <= 1");
        require(angular_falloff >= 0.0, ErrorKind::invalid_geometry, "angular falloff exponent must be >= 0");
    }
};

// Rectangular tiling of a rows x cols array into tiles of tile_rows x tile_cols
// elements. Groups are numbered row-major over tiles; partial edge tiles are kept.
inline std::vector<int> tile_grouping(std::size_t rows, std::size_t cols, std::size_t tile_rows, std::size_t tile_cols)
{
    require(tile_rows >= 1 && tile_cols >= 1, ErrorKind::invalid_geometry, "tile size must be >= 1");
    const std::size_t tiles_per_row = (cols + tile_cols - 1) / tile_cols;
    std::vector<int> groups(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            groups[r * cols + c] = static_cast<int>((r / tile_rows) * tiles_per_row + c / tile_cols);
    return groups;
}

// N unit-amplitude states with phases 0, 2pi/N, ..., 2pi(N-1)/N.
inline std::vector<cplx> uniform_phase_states(std::size_t n_states)
{
    std::vector<cplx> table(n_states);
    for (std::size_t s = 0; s < n_states; ++s)
        table[s] = std::polar(1.0, 2.0 * pi * static_cast<double>(s) / static_cast<double>(n_states));
    return table;
}

// 16 x 16 elements at half-wavelength pitch (6 cm wavelength), 16 groups of
// 4 x 4 elements, 4 states at phases 0, pi/2, pi, 3pi/2.
inline SurfaceSpec default_surface()
{
    SurfaceSpec s;
    s.rows = 16;
    s.cols = 16;
    s.pitch = 0.03;
    s.plane = SurfacePlane::yz;
    s.group_of_element = tile_grouping(16, 16, 4, 4);
    s.state_table = uniform_phase_states(4);
    return s;
}

// ---------------------------------------------------------------------------
// Transceivers
// ---------------------------------------------------------------------------

// Real power-gain pattern: isotropic when exponent == 0, otherwise
// max(0, cos(angle to boresight))^exponent.
struct AntennaPattern
{
    Vec3 boresight = Vec3::UnitX();
    double exponent = 0.0;

    double gain(const Vec3 &direction) const
    {
        if (exponent == 0.0)
            return 1.0;
        const double norm = direction.norm() * boresight.norm();
        if (norm == 0.0)
            return 0.0;
        const double c = std::max(0.0, direction.dot(boresight) / norm);
        return std::pow(c, exponent);
    }
};

struct Layout
{
    Vec3 tx_pos{0.87, -0.84, 0.0};
    Vec3 rx_pos{0.0, 0.0, -0.5};
    double wavelength = 0.06;
    AntennaPattern tx_pattern;  // gain of Tx toward element n
    AntennaPattern rx_pattern;  // gain of Rx toward block m

    double tx_gain(const Vec3 &element) const { return tx_pattern.gain(element - tx_pos); }
    double rx_gain(const Vec3 &block) const { return rx_pattern.gain(block - rx_pos); }

    void validate() const
    {
        require(wavelength > 0.0 && std::isfinite(wavelength), ErrorKind::invalid_geometry, "wavelength must be positive");
        require(tx_pattern.exponent >= 0.0 && rx_pattern.exponent >= 0.0, ErrorKind::invalid_geometry,
                "antenna pattern exponents must be >= 0");
        require(tx_pos.allFinite() && rx_pos.allFinite(), ErrorKind::invalid_geometry, "antenna positions must be finite");
    }
};

// ---------------------------------------------------------------------------
// Target space
// ---------------------------------------------------------------------------

using GridIndex = std::array<std::size_t, 3>;

// Axis-aligned voxel grid. Block m has grid coordinates (i, j, k) with
// m = i + nx * (j + ny * k), i.e. x fastest, then y, then z.
class TargetSpace
{
  public:
    TargetSpace() = default;

    TargetSpace(const Vec3 &corner, const Vec3 &block_size, const GridIndex &counts)
        : corner_(corner), block_size_(block_size), counts_(counts)
    {
        for (int a = 0; a < 3; ++a)
        {
            require(counts[a] >= 1, ErrorKind::invalid_geometry, "block counts must be >= 1");
            require(block_size[a] > 0.0 && std::isfinite(block_size[a]), ErrorKind::invalid_geometry,
                    "block size components must be positive");
        }
        require(corner.allFinite(), ErrorKind::invalid_geometry, "corner must be finite");
        centers_.reserve(size());
        for (std::size_t m = 0; m < size(); ++m)
        {
            const GridIndex g = coords(m);
            Vec3 c;
            for (int a = 0; a < 3; ++a)
                c[a] = corner_[a] + (static_cast<double>(g[a]) + 0.5) * block_size_[a];
            centers_.push_back(c);
        }
    }

    std::size_t size() const { return counts_[0] * counts_[1] * counts_[2]; }
    const Vec3 &corner() const { return corner_; }
    const Vec3 &block_size() const { return block_size_; }
    const GridIndex &counts() const { return counts_; }
    const std::vector<Vec3> &block_centers() const { return centers_; }
    const Vec3 &center(std::size_t m) const { return centers_.at(m); }

    std::size_t index(const GridIndex &g) const { return g[0] + counts_[0] * (g[1] + counts_[1] * g[2]); }

    GridIndex coords(std::size_t m) const
    {
        return {m % counts_[0], (m / counts_[0]) % counts_[1], m / (counts_[0] * counts_[1])};
    }

    bool contains(const GridIndex &g) const { return g[0] < counts_[0] && g[1] < counts_[1] && g[2] < counts_[2]; }

    // Block whose cell contains p, or size() when p lies outside the grid.
    std::size_t locate(const Vec3 &p) const
    {
        GridIndex g{};
        for (int a = 0; a < 3; ++a)
        {
            const double f = std::floor((p[a] - corner_[a]) / block_size_[a]);
            if (f < 0.0 || f >= static_cast<double>(counts_[a]))
                return size();
            g[a] = static_cast<std::size_t>(f);
        }
        return index(g);
    }

  private:
    Vec3 corner_ = Vec3::Zero();
    Vec3 block_size_ = Vec3::Ones();
    GridIndex counts_{1, 1, 1};
    std::vector<Vec3> centers_;
};

inline TargetSpace build_target_space(const Vec3 &corner, const Vec3 &block_size, const GridIndex &counts)
{
    return TargetSpace(corner, block_size, counts);
}

// Signed-count overload for parsed input: rejects zero or negative counts.
inline TargetSpace build_target_space(const Vec3 &corner, const Vec3 &block_size, const std::array<long long, 3> &counts)
{
    GridIndex c{};
    for (int a = 0; a < 3; ++a)
    {
        require(counts[a] >= 1, ErrorKind::invalid_geometry, "block counts must be >= 1");
        c[a] = static_cast<std::size_t>(counts[a]);
    }
    return TargetSpace(corner, block_size, c);
}

// Geometry bundle ingested from a scene-spec document.
struct SceneGeometry
{
    SurfaceSpec surface = default_surface();
    Layout layout;
    TargetSpace target;
};

// ---------------------------------------------------------------------------
// Labels and scenes
// ---------------------------------------------------------------------------

enum class Label : int
{
    human = 1,
    bottle = 2,
    laptop = 3,
    suitcase = 4,
    empty = 5
};

inline constexpr int n_labels = 5;

inline const char *label_name(Label l)
{
    switch (l)
    {
    case Label::human: return "human";
    case Label::bottle: return "bottle";
    case Label::laptop: return "laptop";
    case Label::suitcase: return "suitcase";
    case Label::empty: return "empty";
    }
    return "?";
}

struct SceneEntry
{
    std::size_t block = 0;
    cplx eta{0.0, 0.0};
    int label = static_cast<int>(Label::empty);

    bool operator==(const SceneEntry &) const = default;
};

// Sparse ground truth: listed blocks carry a nonzero reflection coefficient and
// a label; all other blocks are empty space with eta = 0.
struct LabeledScene
{
    std::vector<SceneEntry> entries;
    int n_obj = n_labels;

    bool operator==(const LabeledScene &) const = default;

    void validate(std::size_t n_blocks) const
    {
        std::vector<char> seen(n_blocks, 0);
        for (const auto &e : entries)
        {
            require(e.block < n_blocks, ErrorKind::invalid_argument, "scene block index out of range");
            require(!seen[e.block], ErrorKind::invalid_argument, "scene block listed twice");
            seen[e.block] = 1;
            require(e.eta != cplx(0.0, 0.0), ErrorKind::invalid_argument, "listed scene blocks need eta != 0");
            require(e.label >= 1 && e.label <= n_obj, ErrorKind::invalid_argument, "scene label out of range");
        }
    }

    CVector dense_eta(std::size_t n_blocks) const
    {
        CVector eta = CVector::Zero(static_cast<Eigen::Index>(n_blocks));
        for (const auto &e : entries)
        {
            require(e.block < n_blocks, ErrorKind::dimension_mismatch, "scene block index out of range");
            eta[static_cast<Eigen::Index>(e.block)] = e.eta;
        }
        return eta;
    }
};

inline std::vector<int> ground_truth_labels(const LabeledScene &scene, const TargetSpace &target)
{
    scene.validate(target.size());
    std::vector<int> labels(target.size(), static_cast<int>(Label::empty));
    for (const auto &e : scene.entries)
        labels[e.block] = e.label;
    return labels;
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

// Axis-aligned voxel set with one semantic label. Voxel offsets are relative to
// the placement anchor. Reflection magnitudes are drawn uniformly from
// [magnitude_min, magnitude_max], phases uniformly from [0, 2pi).
struct ShapeTemplate
{
    std::string name;
    int label = static_cast<int>(Label::empty);
    std::vector<GridIndex> voxels;
    double magnitude_min = 0.8;
    double magnitude_max = 1.0;

    GridIndex extent() const
    {
        GridIndex e{0, 0, 0};
        for (const auto &v : voxels)
            for (int a = 0; a < 3; ++a)
                e[a] = std::max(e[a], v[a] + 1);
        return e;
    }
};

inline ShapeTemplate box_template(std::string name, Label label, std::size_t nx, std::size_t ny, std::size_t nz,
                                  double magnitude_min, double magnitude_max)
{
    ShapeTemplate t;
    t.name = std::move(name);
    t.label = static_cast<int>(label);
    t.magnitude_min = magnitude_min;
    t.magnitude_max = magnitude_max;
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i)
                t.voxels.push_back({i, j, k});
    return t;
}

struct PlacementRules
{
    double inclusion_probability = 1.0;  // each library template is placed with this probability
    std::size_t max_attempts = 500;      // random anchor draws per template before giving up
    std::size_t clearance = 0;           // empty voxels required between distinct shapes (Chebyshev)
    bool floor_aligned = false;          // shapes rest on the lowest z layer
};

inline std::vector<ShapeTemplate> default_shape_library()
{
    // Sparse reflecting cores of each class; magnitudes separate the materials.
    return {
        box_template("human", Label::human, 1, 1, 2, 0.9, 1.0),
        box_template("bottle", Label::bottle, 1, 1, 1, 0.25, 0.35),
        box_template("laptop", Label::laptop, 1, 1, 1, 0.45, 0.55),
        box_template("suitcase", Label::suitcase, 1, 1, 1, 0.65, 0.75),
    };
}

// Places each template in order (subject to inclusion_probability) at a random
// non-overlapping anchor. Deterministic in seed.
inline LabeledScene generate_scene(const std::vector<ShapeTemplate> &library, const PlacementRules &rules,
                                   const TargetSpace &target, std::uint64_t seed)
{
    require(rules.inclusion_probability >= 0.0 && rules.inclusion_probability <= 1.0, ErrorKind::invalid_argument,
            "inclusion probability must lie in [0, 1]");
    Rng rng(seed);
    const GridIndex counts = target.counts();
    // 0: free, 1: occupied, 2: within clearance of an occupied voxel
    std::vector<char> state(target.size(), 0);
    LabeledScene scene;

    for (const auto &shape : library)
    {
        require(!shape.voxels.empty(), ErrorKind::invalid_argument, "shape template '" + shape.name + "' has no voxels");
        require(shape.label >= 1 && shape.label <= n_labels, ErrorKind::invalid_argument, "shape label out of range");
        require(shape.magnitude_min > 0.0 && shape.magnitude_max >= shape.magnitude_min, ErrorKind::invalid_argument,
                "shape magnitudes must satisfy 0 < min <= max");
        if (rules.inclusion_probability < 1.0 && rng.uniform() >= rules.inclusion_probability)
            continue;

        const GridIndex ext = shape.extent();
        for (int a = 0; a < 3; ++a)
            require(ext[a] <= counts[a], ErrorKind::placement, "shape '" + shape.name + "' does not fit the target space");

        bool placed = false;
        for (std::size_t attempt = 0; attempt < rules.max_attempts && !placed; ++attempt)
        {
            GridIndex anchor{};
            for (int a = 0; a < 3; ++a)
                anchor[a] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(counts[a] - ext[a])));
            if (rules.floor_aligned)
                anchor[2] = 0;

            bool free = true;
            for (const auto &v : shape.voxels)
            {
                const GridIndex g{anchor[0] + v[0], anchor[1] + v[1], anchor[2] + v[2]};
                if (state[target.index(g)] != 0)
                {
                    free = false;
                    break;
                }
            }
            if (!free)
                continue;

            for (const auto &v : shape.voxels)
            {
                const GridIndex g{anchor[0] + v[0], anchor[1] + v[1], anchor[2] + v[2]};
                const double mag = rng.uniform(shape.magnitude_min, shape.magnitude_max);
                const double phase = rng.uniform(0.0, 2.0 * pi);
                scene.entries.push_back({target.index(g), std::polar(mag, phase), shape.label});
                state[target.index(g)] = 1;
            }
            if (rules.clearance > 0)
            {
                const auto c = static_cast<std::int64_t>(rules.clearance);
                for (const auto &v : shape.voxels)
                {
                    for (std::int64_t dz = -c; dz <= c; ++dz)
                        for (std::int64_t dy = -c; dy <= c; ++dy)
                            for (std::int64_t dx = -c; dx <= c; ++dx)
                            {
                                const std::int64_t g0 = static_cast<std::int64_t>(anchor[0] + v[0]) + dx;
                                const std::int64_t g1 = static_cast<std::int64_t>(anchor[1] + v[1]) + dy;
                                const std::int64_t g2 = static_cast<std::int64_t>(anchor[2] + v[2]) + dz;
                                if (g0 < 0 || g1 < 0 || g2 < 0)
                                    continue;
                                const GridIndex g{static_cast<std::size_t>(g0), static_cast<std::size_t>(g1),
                                                  static_cast<std::size_t>(g2)};
                                if (target.contains(g) && state[target.index(g)] == 0)
                                    state[target.index(g)] = 2;
                            }
                }
            }
            placed = true;
        }
        require(placed, ErrorKind::placement, "could not place shape '" + shape.name + "' without overlap");
    }

    std::sort(scene.entries.begin(), scene.entries.end(),
              [](const SceneEntry &a, const SceneEntry &b) { return a.block < b.block; });
    return scene;
}

} // namespace metasketch
