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

#include <metasketch/scene.hpp>

#include <map>
#include <set>

using namespace metasketch;
using Catch::Matchers::WithinAbs;

TEST_CASE("build_target_space grid arithmetic", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3(1, -1, -1), Vec3(0.4, 0.2, 0.2), GridIndex{1, 10, 10});
    CHECK(t.size() == 100);
    CHECK_THAT(t.center(0).x(), WithinAbs(1.2, 1e-15));
    CHECK_THAT(t.center(0).y(), WithinAbs(-0.9, 1e-15));
    CHECK_THAT(t.center(0).z(), WithinAbs(-0.9, 1e-15));

    const TargetSpace one = build_target_space(Vec3(0.5, 0.25, -2), Vec3(0.2, 0.4, 0.6), GridIndex{1, 1, 1});
    REQUIRE(one.size() == 1);
    CHECK(one.center(0) == Vec3(0.5, 0.25, -2) + Vec3(0.2, 0.4, 0.6) / 2);
}

TEST_CASE("build_target_space rejects degenerate input", "[scene]")
{
    using Counts = std::array<long long, 3>;
    auto kind = [](auto &&f) {
        try
        {
            f();
        }
        catch (const Error &e)
        {
            return e.kind();
        }
        return ErrorKind::numeric;
    };
    CHECK(kind([] { build_target_space(Vec3::Zero(), Vec3::Ones(), Counts{0, 1, 1}); }) == ErrorKind::invalid_geometry);
    CHECK(kind([] { build_target_space(Vec3::Zero(), Vec3::Ones(), Counts{1, -2, 1}); }) == ErrorKind::invalid_geometry);
    CHECK(kind([] { build_target_space(Vec3::Zero(), Vec3(1, 0, 1), Counts{1, 1, 1}); }) == ErrorKind::invalid_geometry);
    CHECK(kind([] { build_target_space(Vec3::Zero(), Vec3(1, -1, 1), Counts{1, 1, 1}); }) == ErrorKind::invalid_geometry);
}

TEST_CASE("block enumeration is x fastest and round-trips through centers", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3(-0.3, 0.1, 2.0), Vec3(0.2, 0.3, 0.5), GridIndex{3, 4, 5});
    REQUIRE(t.size() == 60);
    for (std::size_t m = 0; m < t.size(); ++m)
    {
        const GridIndex g = t.coords(m);
        REQUIRE(m == g[0] + 3 * (g[1] + 4 * g[2]));
        REQUIRE(t.index(g) == m);
        for (int a = 0; a < 3; ++a)
            REQUIRE(t.center(m)[a] == t.corner()[a] + (static_cast<double>(g[a]) + 0.5) * t.block_size()[a]);
        REQUIRE(t.locate(t.center(m)) == m);
    }
    CHECK(t.locate(Vec3(100, 0, 0)) == t.size());
}

TEST_CASE("default surface follows the documented layout", "[scene]")
{
    const SurfaceSpec s = default_surface();
    REQUIRE_NOTHROW(s.validate());
    CHECK(s.n_elements() == 256);
    CHECK(s.n_groups() == 16);
    CHECK(s.n_states() == 4);
    CHECK_THAT(s.pitch, WithinAbs(0.03, 1e-15));
    for (const auto &members : s.group_members())
        CHECK(members.size() == 16);
    // four unit-amplitude phase states 0, pi/2, pi, 3pi/2
    for (std::size_t i = 0; i < 4; ++i)
    {
        CHECK_THAT(std::abs(s.state_table[i]), WithinAbs(1.0, 1e-15));
        CHECK_THAT(std::arg(s.state_table[i] * std::polar(1.0, -0.5 * pi * static_cast<double>(i))), WithinAbs(0.0, 1e-12));
    }
    // tile (r / 4, c / 4)
    CHECK(s.group_of_element[0] == 0);
    CHECK(s.group_of_element[3] == 0);
    CHECK(s.group_of_element[4] == 1);
    CHECK(s.group_of_element[4 * 16] == 4);
    CHECK(s.group_of_element[255] == 15);
}

TEST_CASE("surface validation rejects broken specs", "[scene]")
{
    SurfaceSpec s = default_surface();
    s.state_table = {cplx(1, 0)};
    CHECK_THROWS_AS(s.validate(), Error);

    s = default_surface();
    s.state_table[2] = cplx(1.5, 0);
    CHECK_THROWS_AS(s.validate(), Error);

    s = default_surface();
    s.group_of_element.pop_back();
    CHECK_THROWS_AS(s.validate(), Error);

    s = default_surface();
    for (int &g : s.group_of_element)
        if (g == 3)
            g = 0;  // group 3 left empty
    CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("ground_truth_labels marks listed blocks", "[scene]")
{
    const TargetSpace t8 = build_target_space(Vec3::Zero(), Vec3::Ones(), GridIndex{2, 2, 2});
    CHECK(ground_truth_labels(LabeledScene{}, t8) == std::vector<int>(8, static_cast<int>(Label::empty)));

    const TargetSpace t4 = build_target_space(Vec3::Zero(), Vec3::Ones(), GridIndex{4, 1, 1});
    LabeledScene sc;
    sc.entries = {{0, cplx(1, 0), static_cast<int>(Label::human)}, {3, cplx(0, 0.5), static_cast<int>(Label::laptop)}};
    CHECK(ground_truth_labels(sc, t4) == std::vector<int>{1, 5, 5, 3});
}

TEST_CASE("scene validation enforces invariants", "[scene]")
{
    LabeledScene sc;
    sc.entries = {{2, cplx(1, 0), 1}, {2, cplx(1, 0), 2}};
    CHECK_THROWS_AS(sc.validate(4), Error);
    sc.entries = {{5, cplx(1, 0), 1}};
    CHECK_THROWS_AS(sc.validate(4), Error);
    sc.entries = {{1, cplx(0, 0), 1}};
    CHECK_THROWS_AS(sc.validate(4), Error);
    sc.entries = {{1, cplx(1, 0), 6}};
    CHECK_THROWS_AS(sc.validate(4), Error);
}

TEST_CASE("generate_scene with an empty library is empty", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3::Zero(), Vec3::Ones(), GridIndex{3, 3, 3});
    CHECK(generate_scene({}, PlacementRules{}, t, 5).entries.empty());
}

TEST_CASE("generate_scene transcribes a 2x2x1 bottle template", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3(1, -1, -1), Vec3(0.4, 0.25, 0.25), GridIndex{1, 8, 8});
    const ShapeTemplate bottle = box_template("bottle", Label::bottle, 1, 2, 2, 0.3, 0.4);
    const LabeledScene sc = generate_scene({bottle}, PlacementRules{}, t, 99);
    REQUIRE(sc.entries.size() == 4);
    std::set<std::size_t> blocks;
    for (const auto &e : sc.entries)
    {
        CHECK(e.label == static_cast<int>(Label::bottle));
        CHECK(e.block < t.size());
        CHECK(std::abs(e.eta) >= 0.3);
        CHECK(std::abs(e.eta) <= 0.4);
        blocks.insert(e.block);
    }
    CHECK(blocks.size() == 4);
    // the four blocks form a 2 x 2 square in (y, z)
    GridIndex lo{99, 99, 99}, hi{0, 0, 0};
    for (auto b : blocks)
        for (int a = 0; a < 3; ++a)
        {
            lo[a] = std::min(lo[a], t.coords(b)[a]);
            hi[a] = std::max(hi[a], t.coords(b)[a]);
        }
    CHECK(hi[1] - lo[1] == 1);
    CHECK(hi[2] - lo[2] == 1);
}

TEST_CASE("generate_scene is deterministic and seeds differ", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3(1, -1, -1), Vec3(0.4, 0.25, 0.25), GridIndex{1, 8, 8});
    const std::vector<ShapeTemplate> lib{box_template("human", Label::human, 1, 1, 2, 0.9, 1.0),
                                         box_template("laptop", Label::laptop, 1, 2, 1, 0.4, 0.6)};
    std::vector<LabeledScene> scenes;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
    {
        const LabeledScene sc = generate_scene(lib, PlacementRules{}, t, seed);
        REQUIRE(sc == generate_scene(lib, PlacementRules{}, t, seed));
        REQUIRE_NOTHROW(sc.validate(t.size()));
        REQUIRE(sc.entries.size() == 4);
        scenes.push_back(sc);
    }
    std::size_t identical = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        for (std::size_t j = i + 1; j < scenes.size(); ++j)
            identical += scenes[i] == scenes[j];
    CHECK(identical == 0);
}

TEST_CASE("different seeds give different placements", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3(1, -1, -1), Vec3(0.4, 0.25, 0.25), GridIndex{1, 8, 8});
    const auto lib = default_shape_library();
    std::size_t differ = 0;
    for (std::uint64_t p = 0; p < 100; ++p)
    {
        const auto a = generate_scene(lib, PlacementRules{}, t, 2 * p);
        const auto b = generate_scene(lib, PlacementRules{}, t, 2 * p + 1);
        std::vector<std::size_t> ba, bb;
        for (const auto &e : a.entries)
            ba.push_back(e.block);
        for (const auto &e : b.entries)
            bb.push_back(e.block);
        differ += ba != bb;
    }
    CHECK(differ > 99);
}

TEST_CASE("label histogram of a generated set matches template voxel counts", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3(1, -1, -1), Vec3(0.4, 0.25, 0.25), GridIndex{1, 8, 8});
    const auto lib = default_shape_library();
    std::map<int, std::size_t> expected;
    for (const auto &s : lib)
        expected[s.label] += s.voxels.size();

    std::map<int, std::size_t> hist;
    const std::size_t n = 64;
    for (std::uint64_t seed = 0; seed < n; ++seed)
        for (int l : ground_truth_labels(generate_scene(lib, PlacementRules{}, t, seed), t))
            ++hist[l];
    std::size_t objects = 0;
    for (const auto &[label, count] : expected)
    {
        CHECK(hist[label] == n * count);
        objects += count;
    }
    CHECK(hist[static_cast<int>(Label::empty)] == n * (t.size() - objects));
}

TEST_CASE("placement failures are reported", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3::Zero(), Vec3::Ones(), GridIndex{1, 2, 2});
    const ShapeTemplate tall = box_template("human", Label::human, 1, 1, 3, 0.9, 1.0);
    try
    {
        generate_scene({tall}, PlacementRules{}, t, 1);
        FAIL("expected a placement error");
    }
    catch (const Error &e)
    {
        CHECK(e.kind() == ErrorKind::placement);
    }

    // five single voxels cannot share four blocks
    std::vector<ShapeTemplate> many(5, box_template("bottle", Label::bottle, 1, 1, 1, 0.3, 0.3));
    PlacementRules rules;
    rules.max_attempts = 50;
    CHECK_THROWS_AS(generate_scene(many, rules, t, 1), Error);
}

TEST_CASE("clearance and floor alignment are honored", "[scene]")
{
    const TargetSpace t = build_target_space(Vec3::Zero(), Vec3::Ones(), GridIndex{1, 8, 8});
    std::vector<ShapeTemplate> lib(3, box_template("bottle", Label::bottle, 1, 1, 1, 0.3, 0.3));
    PlacementRules rules;
    rules.clearance = 1;
    rules.floor_aligned = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        const auto sc = generate_scene(lib, rules, t, seed);
        REQUIRE(sc.entries.size() == 3);
        for (const auto &e : sc.entries)
            CHECK(t.coords(e.block)[2] == 0);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i + 1; j < 3; ++j)
            {
                const auto a = t.coords(sc.entries[i].block), b = t.coords(sc.entries[j].block);
                const auto dy = a[1] > b[1] ? a[1] - b[1] : b[1] - a[1];
                CHECK(dy >= 2);
            }
    }
}

TEST_CASE("antenna pattern is isotropic by default", "[scene]")
{
    AntennaPattern p;
    CHECK(p.gain(Vec3(0, 1, 0)) == 1.0);
    p.exponent = 2.0;
    CHECK_THAT(p.gain(Vec3(1, 1, 0)), WithinAbs(0.5, 1e-15));
    CHECK(p.gain(Vec3(-1, 0, 0)) == 0.0);
}
