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
#include "optimizer.hpp"
#include "recovery.hpp"
#include "scene.hpp"
#include "segnet.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace metasketch::io
{

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

// Shortest text that parses back to the same double (17 significant digits).
inline std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split(const std::string &line, char sep = ',')
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, sep))
        out.push_back(cur);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

inline double parse_double(const std::string &s)
{
    char *end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    require(end != s.c_str() && *end == '\0', ErrorKind::io, "not a number: '" + s + "'");
    return v;
}

inline long long parse_int(const std::string &s)
{
    char *end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    require(end != s.c_str() && *end == '\0', ErrorKind::io, "not an integer: '" + s + "'");
    return v;
}

inline std::vector<std::string> read_lines(const fs::path &path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
    {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!line.empty())
            lines.push_back(line);
    }
    return lines;
}

inline std::ofstream open_out(const fs::path &path, bool binary = false)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    return out;
}

// ---------------------------------------------------------------------------
// CSV manifests
// ---------------------------------------------------------------------------

// Column layout of a CSV file: the literal first line and the type of every
// column ("int", "float" or "text"). Written next to the CSV as <file>.manifest.json.
struct CsvSchema
{
    std::string header;
    std::vector<std::string> column_types;
};

inline fs::path manifest_path(const fs::path &csv) { return fs::path(csv.string() + ".manifest.json"); }

inline void write_manifest(const fs::path &csv, const CsvSchema &schema, std::size_t rows)
{
    json j;
    j["format"] = "metasketch-csv-manifest";
    j["version"] = 1;
    j["file"] = csv.filename().string();
    j["header"] = schema.header;
    j["column_types"] = schema.column_types;
    j["rows"] = rows;
    auto out = open_out(manifest_path(csv));
    out << j.dump(2) << '\n';
}

// Checks a CSV against its manifest: header line, row count, column count and
// per-column type. Returns an empty string on success, else the first problem.
inline std::string validate_against_manifest(const fs::path &csv)
{
    try
    {
        std::ifstream mf(manifest_path(csv));
        if (!mf)
            return "missing manifest for " + csv.string();
        const json j = json::parse(mf);
        const auto header = j.at("header").get<std::string>();
        const auto types = j.at("column_types").get<std::vector<std::string>>();
        const auto rows = j.at("rows").get<std::size_t>();
        const auto lines = read_lines(csv);
        if (lines.empty() || lines.front() != header)
            return csv.string() + ": header does not match manifest";
        if (lines.size() - 1 != rows)
            return csv.string() + ": row count does not match manifest";
        for (std::size_t i = 1; i < lines.size(); ++i)
        {
            const auto cells = split(lines[i]);
            if (cells.size() != types.size())
                return csv.string() + ": wrong column count on line " + std::to_string(i + 1);
            for (std::size_t c = 0; c < cells.size(); ++c)
            {
                if (types[c] == "int")
                    parse_int(cells[c]);
                else if (types[c] == "float")
                    parse_double(cells[c]);
                else if (types[c] != "text")
                    return csv.string() + ": unknown column type '" + types[c] + "'";
            }
        }
    }
    catch (const std::exception &e)
    {
        return csv.string() + ": " + e.what();
    }
    return {};
}

// Writes header + rows and the matching manifest.
inline void write_csv(const fs::path &path, const CsvSchema &schema, const std::vector<std::string> &rows)
{
    {
        auto out = open_out(path);
        out << schema.header << '\n';
        for (const auto &r : rows)
            out << r << '\n';
    }
    write_manifest(path, schema, rows.size());
}

// ---------------------------------------------------------------------------
// Complex matrices and vectors
// ---------------------------------------------------------------------------

// CSV: first line "complex_matrix,<rows>,<cols>", then one line per row with
// interleaved re,im pairs.
inline void write_complex_matrix_csv(const fs::path &path, const CMatrix &H)
{
    CsvSchema schema{"complex_matrix," + std::to_string(H.rows()) + "," + std::to_string(H.cols()),
                     std::vector<std::string>(static_cast<std::size_t>(2 * H.cols()), "float")};
    std::vector<std::string> rows;
    for (Eigen::Index r = 0; r < H.rows(); ++r)
    {
        std::string line;
        for (Eigen::Index c = 0; c < H.cols(); ++c)
        {
            if (c)
                line += ',';
            line += fmt(H(r, c).real()) + ',' + fmt(H(r, c).imag());
        }
        rows.push_back(std::move(line));
    }
    write_csv(path, schema, rows);
}

inline CMatrix read_complex_matrix_csv(const fs::path &path)
{
    const auto lines = read_lines(path);
    require(!lines.empty(), ErrorKind::io, path.string() + " is empty");
    const auto head = split(lines[0]);
    require(head.size() == 3 && head[0] == "complex_matrix", ErrorKind::io,
            path.string() + ": expected header complex_matrix,<rows>,<cols>");
    const auto R = parse_int(head[1]);
    const auto C = parse_int(head[2]);
    require(R >= 0 && C >= 0 && static_cast<long long>(lines.size()) == R + 1, ErrorKind::io,
            path.string() + ": row count does not match header");
    CMatrix H(R, C);
    for (long long r = 0; r < R; ++r)
    {
        const auto cells = split(lines[static_cast<std::size_t>(r + 1)]);
        require(static_cast<long long>(cells.size()) == 2 * C, ErrorKind::io, path.string() + ": wrong column count");
        for (long long c = 0; c < C; ++c)
            H(r, c) = cplx(parse_double(cells[static_cast<std::size_t>(2 * c)]),
                           parse_double(cells[static_cast<std::size_t>(2 * c + 1)]));
    }
    return H;
}

// Binary: "MSCM", u32 version = 1, u64 rows, u64 cols, then rows * cols (f64 re,
// f64 im) pairs in row-major order. All fields little-endian.
inline constexpr char matrix_magic[4] = {'M', 'S', 'C', 'M'};

namespace detail
{

inline void put_u64(std::ostream &out, std::uint64_t v)
{
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char *>(b), 8);
}

inline void put_u32(std::ostream &out, std::uint32_t v)
{
    unsigned char b[4];
    for (int i = 0; i < 4; ++i)
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char *>(b), 4);
}

inline void put_f64(std::ostream &out, double v)
{
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

inline std::uint64_t get_u64(std::istream &in)
{
    unsigned char b[8];
    in.read(reinterpret_cast<char *>(b), 8);
    require(in.gcount() == 8, ErrorKind::io, "truncated binary file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint32_t get_u32(std::istream &in)
{
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    require(in.gcount() == 4, ErrorKind::io, "truncated binary file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream &in)
{
    const std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace detail

inline void write_complex_matrix_bin(const fs::path &path, const CMatrix &H)
{
    auto out = open_out(path, true);
    out.write(matrix_magic, 4);
    detail::put_u32(out, 1);
    detail::put_u64(out, static_cast<std::uint64_t>(H.rows()));
    detail::put_u64(out, static_cast<std::uint64_t>(H.cols()));
    for (Eigen::Index r = 0; r < H.rows(); ++r)
        for (Eigen::Index c = 0; c < H.cols(); ++c)
        {
            detail::put_f64(out, H(r, c).real());
            detail::put_f64(out, H(r, c).imag());
        }
}

inline CMatrix read_complex_matrix_bin(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    require(in.gcount() == 4 && std::memcmp(magic, matrix_magic, 4) == 0, ErrorKind::io,
            path.string() + " is not a binary complex matrix");
    require(detail::get_u32(in) == 1, ErrorKind::io, path.string() + ": unsupported version");
    const auto R = detail::get_u64(in);
    const auto C = detail::get_u64(in);
    CMatrix H(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(C));
    for (Eigen::Index r = 0; r < H.rows(); ++r)
        for (Eigen::Index c = 0; c < H.cols(); ++c)
        {
            const double re = detail::get_f64(in);
            const double im = detail::get_f64(in);
            H(r, c) = cplx(re, im);
        }
    return H;
}

// Dispatches on the magic bytes.
inline CMatrix read_complex_matrix(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, matrix_magic, 4) == 0)
        return read_complex_matrix_bin(path);
    return read_complex_matrix_csv(path);
}

// Binary when the extension is .bin, CSV otherwise.
inline void write_complex_matrix(const fs::path &path, const CMatrix &H)
{
    if (path.extension() == ".bin")
        write_complex_matrix_bin(path, H);
    else
        write_complex_matrix_csv(path, H);
}

// CSV with header "re,im" and one entry per line.
inline void write_complex_vector_csv(const fs::path &path, const CVector &v)
{
    std::vector<std::string> rows;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        rows.push_back(fmt(v[i].real()) + ',' + fmt(v[i].imag()));
    write_csv(path, {"re,im", {"float", "float"}}, rows);
}

inline CVector read_complex_vector_csv(const fs::path &path)
{
    const auto lines = read_lines(path);
    require(!lines.empty() && lines[0] == "re,im", ErrorKind::io, path.string() + ": expected header re,im");
    CVector v(static_cast<Eigen::Index>(lines.size() - 1));
    for (std::size_t i = 1; i < lines.size(); ++i)
    {
        const auto cells = split(lines[i]);
        require(cells.size() == 2, ErrorKind::io, path.string() + ": expected two columns");
        v[static_cast<Eigen::Index>(i - 1)] = cplx(parse_double(cells[0]), parse_double(cells[1]));
    }
    return v;
}

// ---------------------------------------------------------------------------
// Configuration matrices, scenes, point clouds, labels, traces
// ---------------------------------------------------------------------------

// One line per configuration; L comma-separated 1-based states, no header.
inline void write_configuration_csv(const fs::path &path, const ConfigurationMatrix &C)
{
    auto out = open_out(path);
    for (std::size_t k = 0; k < C.rows(); ++k)
    {
        for (std::size_t l = 0; l < C.groups(); ++l)
            out << (l ? "," : "") << C(k, l);
        out << '\n';
    }
}

inline ConfigurationMatrix read_configuration_csv(const fs::path &path, std::size_t n_states)
{
    const auto lines = read_lines(path);
    require(!lines.empty(), ErrorKind::io, path.string() + " is empty");
    const std::size_t L = split(lines[0]).size();
    std::vector<int> states;
    for (const auto &line : lines)
    {
        const auto cells = split(line);
        require(cells.size() == L, ErrorKind::io, path.string() + ": ragged configuration rows");
        for (const auto &c : cells)
            states.push_back(static_cast<int>(parse_int(c)));
    }
    return {lines.size(), L, n_states, std::move(states)};
}

inline void write_scene_csv(const fs::path &path, const LabeledScene &scene)
{
    std::vector<std::string> rows;
    for (const auto &e : scene.entries)
        rows.push_back(std::to_string(e.block) + ',' + fmt(e.eta.real()) + ',' + fmt(e.eta.imag()) + ',' +
                       std::to_string(e.label));
    write_csv(path, {"m,re,im,label", {"int", "float", "float", "int"}}, rows);
}

inline LabeledScene read_scene_csv(const fs::path &path)
{
    const auto lines = read_lines(path);
    require(!lines.empty() && lines[0] == "m,re,im,label", ErrorKind::io, path.string() + ": expected header m,re,im,label");
    LabeledScene s;
    for (std::size_t i = 1; i < lines.size(); ++i)
    {
        const auto c = split(lines[i]);
        require(c.size() == 4, ErrorKind::io, path.string() + ": expected four columns");
        const auto m = parse_int(c[0]);
        require(m >= 0, ErrorKind::io, path.string() + ": negative block index");
        s.entries.push_back({static_cast<std::size_t>(m), cplx(parse_double(c[1]), parse_double(c[2])),
                             static_cast<int>(parse_int(c[3]))});
    }
    return s;
}

inline void write_pointcloud_csv(const fs::path &path, const PointCloud &pc)
{
    std::vector<std::string> rows;
    for (Eigen::Index m = 0; m < pc.features.rows(); ++m)
    {
        std::string line;
        for (int f = 0; f < 5; ++f)
            line += (f ? "," : "") + fmt(pc.features(m, f));
        rows.push_back(std::move(line));
    }
    write_csv(path, {"x,y,z,re,im", std::vector<std::string>(5, "float")}, rows);
}

inline PointCloud read_pointcloud_csv(const fs::path &path)
{
    const auto lines = read_lines(path);
    require(!lines.empty() && lines[0] == "x,y,z,re,im", ErrorKind::io, path.string() + ": expected header x,y,z,re,im");
    PointCloud pc;
    pc.features.resize(static_cast<Eigen::Index>(lines.size() - 1), 5);
    for (std::size_t i = 1; i < lines.size(); ++i)
    {
        const auto c = split(lines[i]);
        require(c.size() == 5, ErrorKind::io, path.string() + ": expected five columns");
        for (int f = 0; f < 5; ++f)
            pc.features(static_cast<Eigen::Index>(i - 1), f) = parse_double(c[static_cast<std::size_t>(f)]);
    }
    return pc;
}

inline void write_labels_csv(const fs::path &path, const std::vector<int> &labels)
{
    std::vector<std::string> rows;
    for (int l : labels)
        rows.push_back(std::to_string(l));
    write_csv(path, {"label", {"int"}}, rows);
}

inline std::vector<int> read_labels_csv(const fs::path &path)
{
    const auto lines = read_lines(path);
    require(!lines.empty() && lines[0] == "label", ErrorKind::io, path.string() + ": expected header label");
    std::vector<int> labels;
    for (std::size_t i = 1; i < lines.size(); ++i)
        labels.push_back(static_cast<int>(parse_int(lines[i])));
    return labels;
}

// Trace CSV iter,row,mu,accepted. Line iter = 0 carries the initial AMC; rows
// are reported 1-based.
inline void write_trace_csv(const fs::path &path, const OptimizationResult &res)
{
    std::vector<std::string> rows;
    rows.push_back("0,0," + fmt(res.initial_mu) + ",0");
    for (const auto &r : res.trace.records)
        rows.push_back(std::to_string(r.iteration) + ',' + std::to_string(r.row + 1) + ',' + fmt(r.mu) + ',' +
                       (r.accepted ? "1" : "0"));
    write_csv(path, {"iter,row,mu,accepted", {"int", "int", "float", "int"}}, rows);
}

inline void write_train_trace_csv(const fs::path &path, const std::vector<EpochRecord> &trace)
{
    std::vector<std::string> rows;
    for (const auto &r : trace)
        rows.push_back(std::to_string(r.epoch) + ',' + fmt(r.loss) + ',' + fmt(r.avg_error_rate));
    write_csv(path, {"epoch,loss,avg_error_rate", {"int", "float", "float"}}, rows);
}

// ---------------------------------------------------------------------------
// Scene-spec JSON
// ---------------------------------------------------------------------------

struct SceneSpec
{
    SceneGeometry geometry;
    std::vector<ShapeTemplate> shapes = default_shape_library();
    PlacementRules placement;
};

namespace detail
{

inline Vec3 vec3(const json &j)
{
    require(j.is_array() && j.size() == 3, ErrorKind::io, "expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

inline AntennaPattern pattern(const json &j)
{
    AntennaPattern p;
    if (j.contains("boresight"))
        p.boresight = vec3(j["boresight"]);
    p.exponent = j.value("exponent", 0.0);
    return p;
}

inline SurfacePlane plane_from_string(const std::string &s)
{
    if (s == "yz")
        return SurfacePlane::yz;
    if (s == "xz")
        return SurfacePlane::xz;
    if (s == "xy")
        return SurfacePlane::xy;
    throw Error(ErrorKind::io, "unknown surface plane '" + s + "'");
}

inline const char *plane_name(SurfacePlane p)
{
    switch (p)
    {
    case SurfacePlane::yz: return "yz";
    case SurfacePlane::xz: return "xz";
    case SurfacePlane::xy: return "xy";
    }
    return "yz";
}

} // namespace detail

inline TargetSpace default_target_space() { return build_target_space(Vec3(1.0, -1.0, -1.0), Vec3(0.4, 0.25, 0.25), GridIndex{1, 8, 8}); }

// Every key is optional; missing keys keep the defaults of SceneGeometry,
// default_shape_library() and PlacementRules.
//
// {
//   "surface":  {"rows", "cols", "pitch", "plane": "yz"|"xz"|"xy",
//                "tile": [rows, cols] | "group_of_element": [...],
//                "n_states" | "states": [[re, im], ...], "angular_falloff"},
//   "layout":   {"tx": [x,y,z], "rx": [x,y,z], "wavelength",
//                "tx_pattern": {"boresight": [..], "exponent"}, "rx_pattern": {...}},
//   "target":   {"corner": [..], "block_size": [..], "counts": [nx, ny, nz]},
//   "shapes":   [{"name", "label", "box": [nx,ny,nz] | "voxels": [[i,j,k], ...],
//                 "magnitude": [min, max]}],
//   "placement": {"inclusion_probability", "max_attempts", "clearance", "floor_aligned"}
// }
inline SceneSpec scene_spec_from_json(const json &j)
{
    SceneSpec spec;
    spec.geometry.target = default_target_space();
    SurfaceSpec &s = spec.geometry.surface;
    if (j.contains("surface"))
    {
        const json &js = j["surface"];
        s.rows = js.value("rows", s.rows);
        s.cols = js.value("cols", s.cols);
        s.pitch = js.value("pitch", s.pitch);
        s.plane = detail::plane_from_string(js.value("plane", std::string("yz")));
        s.angular_falloff = js.value("angular_falloff", 0.0);
        if (js.contains("group_of_element"))
            s.group_of_element = js["group_of_element"].get<std::vector<int>>();
        else
        {
            const auto tile = js.value("tile", std::vector<std::size_t>{4, 4});
            require(tile.size() == 2, ErrorKind::io, "surface.tile must be [rows, cols]");
            s.group_of_element = tile_grouping(s.rows, s.cols, tile[0], tile[1]);
        }
        if (js.contains("states"))
        {
            s.state_table.clear();
            for (const auto &st : js["states"])
                s.state_table.emplace_back(st.at(0).get<double>(), st.at(1).get<double>());
        }
        else
            s.state_table = uniform_phase_states(js.value("n_states", std::size_t{4}));
    }
    s.validate();

    Layout &l = spec.geometry.layout;
    if (j.contains("layout"))
    {
        const json &jl = j["layout"];
        if (jl.contains("tx"))
            l.tx_pos = detail::vec3(jl["tx"]);
        if (jl.contains("rx"))
            l.rx_pos = detail::vec3(jl["rx"]);
        l.wavelength = jl.value("wavelength", l.wavelength);
        if (jl.contains("tx_pattern"))
            l.tx_pattern = detail::pattern(jl["tx_pattern"]);
        if (jl.contains("rx_pattern"))
            l.rx_pattern = detail::pattern(jl["rx_pattern"]);
    }
    l.validate();

    if (j.contains("target"))
    {
        const json &jt = j["target"];
        const TargetSpace &d = spec.geometry.target;
        const Vec3 corner = jt.contains("corner") ? detail::vec3(jt["corner"]) : d.corner();
        const Vec3 size = jt.contains("block_size") ? detail::vec3(jt["block_size"]) : d.block_size();
        std::array<long long, 3> counts{static_cast<long long>(d.counts()[0]), static_cast<long long>(d.counts()[1]),
                                        static_cast<long long>(d.counts()[2])};
        if (jt.contains("counts"))
        {
            const auto c = jt["counts"].get<std::vector<long long>>();
            require(c.size() == 3, ErrorKind::io, "target.counts must have three entries");
            counts = {c[0], c[1], c[2]};
        }
        spec.geometry.target = build_target_space(corner, size, counts);
    }

    if (j.contains("shapes"))
    {
        spec.shapes.clear();
        for (const auto &js : j["shapes"])
        {
            ShapeTemplate t;
            t.name = js.value("name", std::string("shape"));
            t.label = js.at("label").get<int>();
            const auto mag = js.value("magnitude", std::vector<double>{0.8, 1.0});
            require(mag.size() == 2, ErrorKind::io, "shape magnitude must be [min, max]");
            t.magnitude_min = mag[0];
            t.magnitude_max = mag[1];
            if (js.contains("voxels"))
            {
                for (const auto &v : js["voxels"])
                    t.voxels.push_back({v.at(0).get<std::size_t>(), v.at(1).get<std::size_t>(), v.at(2).get<std::size_t>()});
            }
            else
            {
                const auto box = js.value("box", std::vector<std::size_t>{1, 1, 1});
                require(box.size() == 3, ErrorKind::io, "shape box must be [nx, ny, nz]");
                t = box_template(t.name, static_cast<Label>(t.label), box[0], box[1], box[2], t.magnitude_min, t.magnitude_max);
            }
            spec.shapes.push_back(std::move(t));
        }
    }
    if (j.contains("placement"))
    {
        const json &jp = j["placement"];
        spec.placement.inclusion_probability = jp.value("inclusion_probability", spec.placement.inclusion_probability);
        spec.placement.max_attempts = jp.value("max_attempts", spec.placement.max_attempts);
        spec.placement.clearance = jp.value("clearance", spec.placement.clearance);
        spec.placement.floor_aligned = jp.value("floor_aligned", spec.placement.floor_aligned);
    }
    return spec;
}

inline json scene_spec_to_json(const SceneSpec &spec)
{
    const SurfaceSpec &s = spec.geometry.surface;
    json js;
    js["rows"] = s.rows;
    js["cols"] = s.cols;
    js["pitch"] = s.pitch;
    js["plane"] = detail::plane_name(s.plane);
    js["group_of_element"] = s.group_of_element;
    json states = json::array();
    for (const cplx &r : s.state_table)
        states.push_back(json::array({r.real(), r.imag()}));
    js["states"] = states;
    js["angular_falloff"] = s.angular_falloff;

    const Layout &l = spec.geometry.layout;
    json jl;
    jl["tx"] = detail::to_json(l.tx_pos);
    jl["rx"] = detail::to_json(l.rx_pos);
    jl["wavelength"] = l.wavelength;
    jl["tx_pattern"] = {{"boresight", detail::to_json(l.tx_pattern.boresight)}, {"exponent", l.tx_pattern.exponent}};
    jl["rx_pattern"] = {{"boresight", detail::to_json(l.rx_pattern.boresight)}, {"exponent", l.rx_pattern.exponent}};

    const TargetSpace &t = spec.geometry.target;
    json jt;
    jt["corner"] = detail::to_json(t.corner());
    jt["block_size"] = detail::to_json(t.block_size());
    jt["counts"] = json::array({t.counts()[0], t.counts()[1], t.counts()[2]});

    json shapes = json::array();
    for (const auto &sh : spec.shapes)
    {
        json v = json::array();
        for (const auto &g : sh.voxels)
            v.push_back(json::array({g[0], g[1], g[2]}));
        shapes.push_back({{"name", sh.name}, {"label", sh.label}, {"voxels", v},
                          {"magnitude", json::array({sh.magnitude_min, sh.magnitude_max})}});
    }
    json jp = {{"inclusion_probability", spec.placement.inclusion_probability},
               {"max_attempts", spec.placement.max_attempts},
               {"clearance", spec.placement.clearance},
               {"floor_aligned", spec.placement.floor_aligned}};
    return {{"surface", js}, {"layout", jl}, {"target", jt}, {"shapes", shapes}, {"placement", jp}};
}

inline json read_json(const fs::path &path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    try
    {
        return json::parse(in);
    }
    catch (const json::exception &e)
    {
        throw Error(ErrorKind::io, path.string() + ": " + e.what());
    }
}

inline SceneSpec load_scene_spec(const fs::path &path)
{
    try
    {
        return scene_spec_from_json(read_json(path));
    }
    catch (const json::exception &e)
    {
        throw Error(ErrorKind::io, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Segmentation model: <name>.json (architecture, version) + <name>.weights.bin
// ---------------------------------------------------------------------------

// Weights file: "MSNW", u32 version = 1, u64 count, then count little-endian f64
// values in SegNetParams::to_vector() order.
inline constexpr char weights_magic[4] = {'M', 'S', 'N', 'W'};

inline fs::path weights_path(const fs::path &model_json)
{
    fs::path p = model_json;
    p.replace_extension(".weights.bin");
    return p;
}

inline void save_segnet(const fs::path &model_json, const SegNetParams &params)
{
    params.validate();
    json j;
    j["format"] = "metasketch-segnet";
    j["version"] = 1;
    j["activation"] = to_string(params.activation);
    auto shapes = [](const std::vector<DenseLayer> &layers) {
        json a = json::array();
        for (const auto &l : layers)
            a.push_back(json::array({l.out(), l.in()}));
        return a;
    };
    j["local_layers"] = shapes(params.local);
    j["pool_layer"] = json::array({params.pool.out(), params.pool.in()});
    j["head_layers"] = shapes(params.head);
    j["parameter_count"] = params.parameter_count();
    j["weights_file"] = weights_path(model_json).filename().string();
    {
        auto out = open_out(model_json);
        out << j.dump(2) << '\n';
    }
    auto out = open_out(weights_path(model_json), true);
    out.write(weights_magic, 4);
    detail::put_u32(out, 1);
    const RVector v = params.to_vector();
    detail::put_u64(out, static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        detail::put_f64(out, v[i]);
}

inline SegNetParams load_segnet(const fs::path &model_json)
{
    const json j = read_json(model_json);
    require(j.value("format", std::string()) == "metasketch-segnet", ErrorKind::io, model_json.string() + " is not a segnet model");
    require(j.value("version", 0) == 1, ErrorKind::io, model_json.string() + ": unsupported model version");
    SegNetParams p;
    p.activation = activation_from_string(j.at("activation").get<std::string>());
    auto make = [](const json &shape) {
        DenseLayer l;
        l.W = RMatrix::Zero(shape.at(0).get<Eigen::Index>(), shape.at(1).get<Eigen::Index>());
        l.b = RVector::Zero(shape.at(0).get<Eigen::Index>());
        return l;
    };
    for (const auto &s : j.at("local_layers"))
        p.local.push_back(make(s));
    p.pool = make(j.at("pool_layer"));
    for (const auto &s : j.at("head_layers"))
        p.head.push_back(make(s));
    p.validate();

    const fs::path wpath = model_json.parent_path() / j.at("weights_file").get<std::string>();
    std::ifstream in(wpath, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + wpath.string());
    char magic[4];
    in.read(magic, 4);
    require(in.gcount() == 4 && std::memcmp(magic, weights_magic, 4) == 0, ErrorKind::io, wpath.string() + " is not a weights file");
    require(detail::get_u32(in) == 1, ErrorKind::io, wpath.string() + ": unsupported weights version");
    const auto count = detail::get_u64(in);
    require(count == p.parameter_count(), ErrorKind::io, wpath.string() + ": parameter count does not match the model");
    RVector v(static_cast<Eigen::Index>(count));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = detail::get_f64(in);
    p.from_vector(v);
    return p;
}

} // namespace metasketch::io
