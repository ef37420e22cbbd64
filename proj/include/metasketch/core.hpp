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

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace metasketch
{

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

inline constexpr double pi = 3.14159265358979323846;

enum class ErrorKind
{
    invalid_geometry,
    singular_geometry,
    placement,
    dimension_mismatch,
    undefined_coherence,
    invalid_argument,
    infeasible,
    not_converged,
    numeric,
    training,
    io
};

inline const char *to_string(ErrorKind kind)
{
    switch (kind)
    {
    case ErrorKind::invalid_geometry: return "invalid geometry";
    case ErrorKind::singular_geometry: return "singular geometry";
    case ErrorKind::placement: return "placement";
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::undefined_coherence: return "undefined coherence";
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::not_converged: return "not converged";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::training: return "training";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

// Single exception type for the library; kind() tells callers what went wrong.
class Error : public std::runtime_error
{
  public:
    Error(ErrorKind kind, const std::string &what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string &what)
{
    if (!ok)
        throw Error(kind, what);
}

} // namespace metasketch
