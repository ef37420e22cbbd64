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
#include "scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace metasketch
{

struct RecoveryParams
{
    double epsilon = 0.0;             // residual bound on |H eta - (y - y^B)|_2
    std::size_t max_iterations = 50000;  // per proximal-gradient solve
    double convergence_tol = 1e-9;    // relative duality gap; also the equality tolerance when epsilon == 0
    double lambda_bisection_tol = 1e-4;  // relative width of the final lambda bracket

    void validate() const
    {
        require(epsilon >= 0.0 && std::isfinite(epsilon), ErrorKind::invalid_argument, "epsilon must be >= 0");
        require(max_iterations >= 1, ErrorKind::invalid_argument, "max_iterations must be >= 1");
        require(convergence_tol > 0.0 && lambda_bisection_tol > 0.0, ErrorKind::invalid_argument,
                "recovery tolerances must be positive");
    }
};

// Residual bound for complex Gaussian noise with per-component std sigma:
// the expected norm of the K-dim noise vector, sigma * sqrt(2K).
inline double default_epsilon(double noise_sigma, std::size_t K) { return noise_sigma * std::sqrt(2.0 * static_cast<double>(K)); }

class InfeasibleError : public Error
{
  public:
    explicit InfeasibleError(double floor)
        : Error(ErrorKind::infeasible, "smallest achievable residual " + std::to_string(floor) + " exceeds epsilon"),
          residual_floor(floor) {}
    double residual_floor;
};

class ConvergenceError : public Error
{
  public:
    ConvergenceError(const std::string &what, CVector best_iterate)
        : Error(ErrorKind::not_converged, what), best(std::move(best_iterate)) {}
    CVector best;
};

struct RecoveryResult
{
    CVector eta;
    double residual = 0.0;  // |H eta - b|_2
    double lambda = 0.0;    // penalty of the final LASSO solve (0 when polished)
    std::size_t iterations = 0;
};

inline double l1_norm(const CVector &x) { return x.cwiseAbs().sum(); }

// Shrinks the modulus of every entry by tau, preserving its phase.
inline CVector complex_soft_threshold(const CVector &x, double tau)
{
    CVector out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
    {
        const double a = std::abs(x[i]);
        out[i] = a > tau ? x[i] * ((a - tau) / a) : cplx(0.0, 0.0);
    }
    return out;
}

// Largest eigenvalue of H^H H by power iteration from a fixed start vector.
inline double lipschitz_constant(const CMatrix &H, std::size_t iterations = 500)
{
    CVector v = CVector::Ones(H.cols()) / std::sqrt(static_cast<double>(H.cols()));
    double est = 0.0;
    for (std::size_t it = 0; it < iterations; ++it)
    {
        const CVector w = H.adjoint() * (H * v);
        const double n = w.norm();
        if (n == 0.0)
            return 0.0;
        v = w / n;
        if (std::abs(n - est) <= 1e-14 * n)
        {
            est = n;
            break;
        }
        est = n;
    }
    return est;
}

// Accelerated proximal gradient (FISTA with gradient-based restart) for
//   min 0.5 |H x - b|^2 + lambda |x|_1
// over complex x, stopped on a relative duality gap.
class LassoSolver
{
  public:
    explicit LassoSolver(const CMatrix &H) : H_(H), Hadj_(H.adjoint())
    {
        lipschitz_ = lipschitz_constant(H) * (1.0 + 1e-9);
    }

    struct Solution
    {
        CVector x;
        std::size_t iterations = 0;
        bool converged = false;
    };

    double lipschitz() const { return lipschitz_; }

    // Relative duality gap (P - D) / max(P, tiny) for the penalized problem.
    double relative_gap(const CVector &x, const CVector &b, double lambda) const
    {
        const CVector u0 = b - H_ * x;
        const double primal = 0.5 * u0.squaredNorm() + lambda * l1_norm(x);
        const double corr = (Hadj_ * u0).cwiseAbs().maxCoeff();
        const double s = corr > lambda ? lambda / corr : 1.0;
        const CVector u = s * u0;
        const double dual = (u.adjoint() * b)(0).real() - 0.5 * u.squaredNorm();
        const double denom = std::max(primal, std::numeric_limits<double>::min());
        return std::max(0.0, primal - dual) / denom;
    }

    Solution solve(const CVector &b, double lambda, const CVector &x0, std::size_t max_iterations, double tol) const
    {
        Solution sol;
        if (lipschitz_ == 0.0)
        {
            sol.x = CVector::Zero(H_.cols());
            sol.converged = true;
            return sol;
        }
        const double step = 1.0 / lipschitz_;
        CVector x = x0;
        CVector y = x0;
        CVector x_prev = x0;
        double t = 1.0;
        for (std::size_t it = 1; it <= max_iterations; ++it)
        {
            const CVector grad = Hadj_ * (H_ * y - b);
            x_prev = x;
            x = complex_soft_threshold(y - step * grad, step * lambda);
            const CVector dx = x - x_prev;
            // restart momentum when it points uphill
            if ((y - x).dot(dx).real() > 0.0)
            {
                t = 1.0;
                y = x;
            }
            else
            {
                const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
                y = x + ((t - 1.0) / t_next) * dx;
                t = t_next;
            }
            if (it % 10 == 0 || it == max_iterations)
            {
                if (relative_gap(x, b, lambda) <= tol)
                {
                    sol.x = std::move(x);
                    sol.iterations = it;
                    sol.converged = true;
                    return sol;
                }
            }
        }
        sol.x = std::move(x);
        sol.iterations = max_iterations;
        sol.converged = relative_gap(sol.x, b, lambda) <= tol;
        return sol;
    }

  private:
    CMatrix H_;
    CMatrix Hadj_;
    double lipschitz_ = 0.0;
};

// ADMM for   min |x|_1  s.t.  H x = b   over complex x. The x-iterate is the
// orthogonal projection onto the affine set, the z-iterate is sparse.
class BasisPursuitSolver
{
  public:
    explicit BasisPursuitSolver(const CMatrix &H) : H_(H), cod_(H) {}

    struct Solution
    {
        CVector x;  // feasible up to rounding
        CVector z;  // sparse splitting copy
        std::size_t iterations = 0;
        bool converged = false;
    };

    CVector project(const CVector &v, const CVector &b) const { return v - cod_.solve(H_ * v - b); }

    Solution solve(const CVector &b, std::size_t max_iterations, double tol) const
    {
        Solution sol;
        const CVector x_ls = cod_.solve(b);
        const double scale = x_ls.cwiseAbs().maxCoeff();
        if (scale == 0.0)
        {
            sol.x = sol.z = CVector::Zero(H_.cols());
            sol.converged = true;
            return sol;
        }
        double rho = 10.0 / scale;
        CVector z = x_ls;
        CVector u = CVector::Zero(H_.cols());
        CVector x = x_ls;
        for (std::size_t it = 1; it <= max_iterations; ++it)
        {
            x = project(z - u, b);
            const CVector z_prev = z;
            z = complex_soft_threshold(x + u, 1.0 / rho);
            u += x - z;
            const double r = (x - z).norm();
            const double s = rho * (z - z_prev).norm();
            const double eps_pri = tol * std::max(x.norm(), z.norm());
            const double eps_dual = tol * rho * u.norm();
            if (r <= eps_pri && s <= eps_dual)
            {
                sol.converged = true;
                sol.iterations = it;
                break;
            }
            // residual balancing, scaled dual rescaled with rho
            if (r > 10.0 * s)
            {
                rho *= 2.0;
                u /= 2.0;
            }
            else if (s > 10.0 * r)
            {
                rho /= 2.0;
                u *= 2.0;
            }
            sol.iterations = it;
        }
        sol.x = std::move(x);
        sol.z = std::move(z);
        return sol;
    }

  private:
    CMatrix H_;
    Eigen::CompleteOrthogonalDecomposition<CMatrix> cod_;
};

namespace detail
{

inline double residual_norm(const CMatrix &H, const CVector &x, const CVector &b) { return (H * x - b).norm(); }

// Least-squares refit on the support of x. Returns an empty vector when the
// support is too large or rank deficient.
inline CVector support_refit(const CMatrix &H, const CVector &x, const CVector &b)
{
    const double peak = x.cwiseAbs().maxCoeff();
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (std::abs(x[i]) > 1e-7 * peak)
            support.push_back(i);
    if (support.empty() || support.size() > static_cast<std::size_t>(H.rows()))
        return {};
    CMatrix Hs(H.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j)
        Hs.col(static_cast<Eigen::Index>(j)) = H.col(support[j]);
    const Eigen::ColPivHouseholderQR<CMatrix> qr(Hs);
    if (qr.rank() < Hs.cols())
        return {};
    const CVector coef = qr.solve(b);
    CVector out = CVector::Zero(x.size());
    for (std::size_t j = 0; j < support.size(); ++j)
        out[support[j]] = coef[static_cast<Eigen::Index>(j)];
    return out;
}

} // namespace detail

// Solves   min |eta|_1  s.t.  |H eta - (y - y^B)|_2 <= epsilon.
//
// epsilon > 0: bisection on the LASSO penalty lambda (residual grows with
// lambda); returns the solution at the largest bracketed lambda whose residual
// does not exceed epsilon.
// epsilon == 0 (or epsilon below what the penalized path reaches): ADMM basis
// pursuit, then a least-squares refit on the recovered support when that keeps
// the l1 norm, so the equality holds to convergence_tol * |b|.
inline RecoveryResult recover_eta(const CMatrix &H, const CVector &y, const CVector &y_background,
                                  const RecoveryParams &params)
{
    params.validate();
    require(y.size() == H.rows() && y_background.size() == H.rows(), ErrorKind::dimension_mismatch,
            "measurement and background lengths must equal K");
    require(H.allFinite() && y.allFinite() && y_background.allFinite(), ErrorKind::numeric,
            "recovery inputs must be finite");
    for (Eigen::Index m = 0; m < H.cols(); ++m)
        require(H.col(m).norm() > 0.0, ErrorKind::invalid_argument, "H has a zero column " + std::to_string(m));

    const CVector b = y - y_background;
    const double b_norm = b.norm();
    const double eps = params.epsilon;
    RecoveryResult res;
    res.eta = CVector::Zero(H.cols());
    res.residual = b_norm;
    if (b_norm <= eps || b_norm == 0.0)
        return res;

    // smallest achievable residual
    const Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(H);
    const CVector x_ls = cod.solve(b);
    const double floor = detail::residual_norm(H, x_ls, b);
    const double eq_tol = params.convergence_tol * b_norm;
    if (floor > eps * (1.0 + params.convergence_tol) + eq_tol)
        throw InfeasibleError(floor);

    const LassoSolver solver(H);
    const double lambda_max = (H.adjoint() * b).cwiseAbs().maxCoeff();
    const double gap_tol = params.convergence_tol;
    std::size_t total_iterations = 0;

    auto run = [&](double lambda, const CVector &warm) {
        auto s = solver.solve(b, lambda, warm, params.max_iterations, gap_tol);
        total_iterations += s.iterations;
        return s;
    };

    if (eps > 0.0)
    {
        // bracket: residual(hi) > eps >= residual(lo)
        double hi = lambda_max;
        double lo = 0.5 * lambda_max;
        auto lo_sol = run(lo, CVector::Zero(H.cols()));
        double lo_res = detail::residual_norm(H, lo_sol.x, b);
        const double lambda_floor = lambda_max * 1e-12;
        while (lo_res > eps && lo > lambda_floor)
        {
            hi = lo;
            lo *= 0.1;
            lo_sol = run(lo, lo_sol.x);
            lo_res = detail::residual_norm(H, lo_sol.x, b);
        }
        if (lo_res <= eps)
        {
            CVector warm = lo_sol.x;
            while (std::log(hi / lo) > params.lambda_bisection_tol && lo_res < eps * (1.0 - params.lambda_bisection_tol))
            {
                const double mid = std::sqrt(lo * hi);
                auto mid_sol = run(mid, warm);
                const double mid_res = detail::residual_norm(H, mid_sol.x, b);
                if (mid_res <= eps)
                {
                    lo = mid;
                    lo_sol = std::move(mid_sol);
                    lo_res = mid_res;
                    warm = lo_sol.x;
                }
                else
                {
                    hi = mid;
                }
            }
            if (!lo_sol.converged)
                throw ConvergenceError("proximal gradient did not reach the duality-gap tolerance", lo_sol.x);
            res.eta = std::move(lo_sol.x);
            res.residual = lo_res;
            res.lambda = lo;
            res.iterations = total_iterations;
            return res;
        }
        // epsilon below what continuation reaches: fall through to the equality path
    }

    // equality-constrained basis pursuit
    const BasisPursuitSolver bp(H);
    const auto sol = bp.solve(b, params.max_iterations, params.convergence_tol);
    total_iterations += sol.iterations;
    const double tol = std::max(eps, eq_tol);

    CVector best;
    const CVector refit = detail::support_refit(H, sol.z, b);
    if (refit.size() > 0 && detail::residual_norm(H, refit, b) <= tol &&
        l1_norm(refit) <= l1_norm(sol.x) * (1.0 + 1e-6) + eq_tol)
    {
        best = refit;
    }
    else if (sol.converged && detail::residual_norm(H, sol.x, b) <= tol)
    {
        best = sol.x;
    }
    if (best.size() == 0)
        throw ConvergenceError("basis pursuit did not converge", sol.x);

    res.eta = std::move(best);
    res.residual = detail::residual_norm(H, res.eta, b);
    res.lambda = 0.0;
    res.iterations = total_iterations;
    return res;
}

// ---------------------------------------------------------------------------
// Point cloud
// ---------------------------------------------------------------------------

// M x 5 features, row m = (x_m, y_m, z_m, Re eta_m, Im eta_m), rows in block order.
struct PointCloud
{
    Eigen::Matrix<double, Eigen::Dynamic, 5> features;

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

inline PointCloud assemble_pointcloud(const CVector &eta, const TargetSpace &target)
{
    require(static_cast<std::size_t>(eta.size()) == target.size(), ErrorKind::dimension_mismatch,
            "eta length must equal the number of blocks");
    PointCloud pc;
    pc.features.resize(eta.size(), 5);
    for (Eigen::Index m = 0; m < eta.size(); ++m)
    {
        const Vec3 &c = target.center(static_cast<std::size_t>(m));
        pc.features(m, 0) = c.x();
        pc.features(m, 1) = c.y();
        pc.features(m, 2) = c.z();
        pc.features(m, 3) = eta[m].real();
        pc.features(m, 4) = eta[m].imag();
    }
    return pc;
}

} // namespace metasketch
